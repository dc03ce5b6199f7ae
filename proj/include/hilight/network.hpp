#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "hilight/common.hpp"

namespace hilight {

using NodeId = std::int32_t;
using LinkId = std::int32_t;
using LaneId = std::int32_t;

constexpr NodeId kOutside = -1;

// Compass order is clockwise so that turn geometry is index arithmetic.
enum class Bearing : std::uint8_t { North = 0, East = 1, South = 2, West = 3 };
// Approach = the arm of the intersection the traffic arrives through.
enum class Approach : std::uint8_t { North = 0, East = 1, South = 2, West = 3 };
enum class Turn : std::uint8_t { Left = 0, Through = 1, Right = 2 };

inline const char* to_string(Bearing b) {
  static const char* names[] = {"N", "E", "S", "W"};
  return names[static_cast<int>(b)];
}
inline const char* to_string(Approach a) {
  static const char* names[] = {"N", "E", "S", "W"};
  return names[static_cast<int>(a)];
}
inline const char* to_string(Turn t) {
  static const char* names[] = {"left", "through", "right"};
  return names[static_cast<int>(t)];
}

// Traffic arriving through arm `a` travels in the opposite compass direction.
inline Bearing heading_of(Approach a) {
  return static_cast<Bearing>((static_cast<int>(a) + 2) % 4);
}
inline Approach arrival_arm(Bearing b) {
  return static_cast<Approach>((static_cast<int>(b) + 2) % 4);
}
inline Bearing turn_heading(Bearing heading, Turn t) {
  switch (t) {
    case Turn::Left: return static_cast<Bearing>((static_cast<int>(heading) + 3) % 4);
    case Turn::Through: return heading;
    case Turn::Right: return static_cast<Bearing>((static_cast<int>(heading) + 1) % 4);
  }
  throw std::logic_error("turn_heading: bad turn");
}
// Turn required to go from one travel direction into another; U-turns are not modeled.
inline Turn turn_between(Bearing from, Bearing to) {
  int d = (static_cast<int>(to) - static_cast<int>(from) + 4) % 4;
  if (d == 0) return Turn::Through;
  if (d == 1) return Turn::Right;
  if (d == 3) return Turn::Left;
  throw std::invalid_argument("turn_between: U-turn is not a valid movement");
}

constexpr double kVehicleFootprintMeters = 7.5;  // jam spacing per stored vehicle
constexpr int kLanesPerLink = 3;                 // left / through / right
constexpr int kNumPhases = 8;
constexpr int kMaxNeighbors = 4;
constexpr int kIncomingLanes = 12;

struct Lane {
  LaneId id = -1;
  LinkId link = -1;
  double length = 0.0;
  double speed_limit = 0.0;
  int capacity = 0;           // floor(length / 7.5), at least 1
  Approach direction = Approach::North;  // arm this lane is attached to
  Turn turn_role = Turn::Through;
};

struct Link {
  LinkId id = -1;
  NodeId from = kOutside;  // kOutside => boundary source
  NodeId to = kOutside;    // kOutside => boundary sink
  Bearing bearing = Bearing::North;
  double length = 0.0;
  std::array<LaneId, kLanesPerLink> lanes{-1, -1, -1};  // indexed by Turn
  bool is_source() const { return from == kOutside; }
  bool is_sink() const { return to == kOutside; }
};

struct Movement {
  LaneId in_lane = -1;
  LaneId out_lane = -1;
  Turn turn = Turn::Through;
  LinkId out_link = -1;
  Approach approach = Approach::North;
};

struct Phase {
  int index = 0;
  std::vector<Movement> movements;
};

// Abstract (approach, turn) description of one phase, identical at every
// intersection; lane-level Phases are instantiated from these.
struct PhaseSpec {
  std::string name;
  std::vector<std::pair<Approach, Turn>> moves;  // signalized movements
};

// The fixed NEMA-style 8-phase scheme. Right turns are unsignalized and are
// therefore appended to every instantiated phase rather than listed here.
inline const std::array<PhaseSpec, kNumPhases>& standard_phase_set() {
  static const std::array<PhaseSpec, kNumPhases> specs = {{
      {"NS-through", {{Approach::North, Turn::Through}, {Approach::South, Turn::Through}}},
      {"NS-left", {{Approach::North, Turn::Left}, {Approach::South, Turn::Left}}},
      {"EW-through", {{Approach::East, Turn::Through}, {Approach::West, Turn::Through}}},
      {"EW-left", {{Approach::East, Turn::Left}, {Approach::West, Turn::Left}}},
      {"N-through-left", {{Approach::North, Turn::Through}, {Approach::North, Turn::Left}}},
      {"S-through-left", {{Approach::South, Turn::Through}, {Approach::South, Turn::Left}}},
      {"E-through-left", {{Approach::East, Turn::Through}, {Approach::East, Turn::Left}}},
      {"W-through-left", {{Approach::West, Turn::Through}, {Approach::West, Turn::Left}}},
  }};
  return specs;
}

struct Intersection {
  NodeId id = -1;
  std::string name;
  double x = 0.0, y = 0.0;
  std::array<LinkId, 4> in_links{-1, -1, -1, -1};   // by Approach
  std::array<LinkId, 4> out_links{-1, -1, -1, -1};  // by Bearing
  std::vector<LaneId> incoming;  // fixed order N-L,N-T,N-R, E-..., S-..., W-...
  std::vector<LaneId> outgoing;
  std::vector<Movement> movements;         // all 12, incoming-lane order
  std::array<Phase, kNumPhases> phases;
  std::vector<NodeId> neighbors;           // sorted by (distance, id)
  // green[p][slot]: may the incoming lane at `slot` discharge under phase p
  std::array<std::array<bool, kIncomingLanes>, kNumPhases> green{};
};

struct Region {
  int id = 0;
  std::vector<NodeId> members;
  double centroid_x = 0.0, centroid_y = 0.0;
};

class Network {
 public:
  int rows = 0, cols = 0;
  double link_length = 0.0;
  double speed_limit = 0.0;

  std::vector<Intersection> intersections;
  std::vector<Lane> lanes;
  std::vector<Link> links;
  std::vector<std::vector<bool>> adjacency;
  std::vector<Region> regions;
  std::vector<LinkId> source_links;
  std::vector<LinkId> sink_links;
  std::vector<NodeId> lane_owner;  // intersection the lane feeds; -1 for sink-link lanes
  std::vector<int> lane_slot;      // index within owner's incoming order; -1 for sink lanes

  int num_intersections() const { return static_cast<int>(intersections.size()); }
  int num_regions() const { return static_cast<int>(regions.size()); }

  const Lane& lane(LaneId id) const { return lanes.at(static_cast<std::size_t>(id)); }
  const Link& link(LinkId id) const { return links.at(static_cast<std::size_t>(id)); }
  const Intersection& intersection(NodeId id) const {
    return intersections.at(static_cast<std::size_t>(id));
  }

  void bounding_box(double& min_x, double& min_y, double& max_x, double& max_y) const {
    min_x = min_y = std::numeric_limits<double>::infinity();
    max_x = max_y = -std::numeric_limits<double>::infinity();
    for (const auto& it : intersections) {
      min_x = std::min(min_x, it.x);
      max_x = std::max(max_x, it.x);
      min_y = std::min(min_y, it.y);
      max_y = std::max(max_y, it.y);
    }
  }
};

namespace detail {

inline int grid_node(int row, int col, int cols) { return row * cols + col; }

// neighbor grid offsets by bearing: N = +row
inline bool grid_step(int row, int col, int rows, int cols, Bearing b, int& nr, int& nc) {
  nr = row;
  nc = col;
  switch (b) {
    case Bearing::North: nr = row + 1; break;
    case Bearing::East: nc = col + 1; break;
    case Bearing::South: nr = row - 1; break;
    case Bearing::West: nc = col - 1; break;
  }
  return nr >= 0 && nr < rows && nc >= 0 && nc < cols;
}

}  // namespace detail

inline void partition_regions(Network& net, int region_rows, int region_cols) {
  if (region_rows < 1 || region_cols < 1)
    throw std::invalid_argument("partition_regions: region grid dims must be >= 1");
  if (region_rows * region_cols > net.num_intersections())
    throw std::invalid_argument("partition_regions: more cells than intersections");

  double min_x, min_y, max_x, max_y;
  net.bounding_box(min_x, min_y, max_x, max_y);
  const double w = max_x - min_x, h = max_y - min_y;

  std::map<std::pair<int, int>, std::vector<NodeId>> cells;
  for (const auto& it : net.intersections) {
    int cc = 0, cr = 0;
    if (w > 0) cc = std::min(region_cols - 1, static_cast<int>(std::floor((it.x - min_x) / (w / region_cols))));
    if (h > 0) cr = std::min(region_rows - 1, static_cast<int>(std::floor((it.y - min_y) / (h / region_rows))));
    cells[{cr, cc}].push_back(it.id);
  }

  net.regions.clear();
  for (auto& [cell, members] : cells) {
    Region r;
    r.id = static_cast<int>(net.regions.size());
    r.members = members;
    for (NodeId m : members) {
      r.centroid_x += net.intersection(m).x;
      r.centroid_y += net.intersection(m).y;
    }
    r.centroid_x /= static_cast<double>(members.size());
    r.centroid_y /= static_cast<double>(members.size());
    net.regions.push_back(std::move(r));
  }
}

inline Network build_grid_network(int rows, int cols, double link_length, double speed_limit) {
  if (rows < 1 || cols < 1)
    throw std::invalid_argument("build_grid_network: rows and cols must be >= 1");
  if (link_length <= 0)
    throw std::invalid_argument("build_grid_network: link_length must be > 0");
  if (speed_limit <= 0)
    throw std::invalid_argument("build_grid_network: speed_limit must be > 0");

  Network net;
  net.rows = rows;
  net.cols = cols;
  net.link_length = link_length;
  net.speed_limit = speed_limit;

  const int n = rows * cols;
  net.intersections.resize(static_cast<std::size_t>(n));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      auto& it = net.intersections[static_cast<std::size_t>(detail::grid_node(r, c, cols))];
      it.id = detail::grid_node(r, c, cols);
      it.name = "I_" + std::to_string(r) + "_" + std::to_string(c);
      it.x = c * link_length;
      it.y = r * link_length;
    }
  }

  const int capacity = std::max(1, static_cast<int>(std::floor(link_length / kVehicleFootprintMeters)));
  auto add_link = [&](NodeId from, NodeId to, Bearing b) -> LinkId {
    Link lk;
    lk.id = static_cast<LinkId>(net.links.size());
    lk.from = from;
    lk.to = to;
    lk.bearing = b;
    lk.length = link_length;
    const Approach arm = to != kOutside ? arrival_arm(b) : static_cast<Approach>(b);
    for (int t = 0; t < kLanesPerLink; ++t) {
      Lane ln;
      ln.id = static_cast<LaneId>(net.lanes.size());
      ln.link = lk.id;
      ln.length = link_length;
      ln.speed_limit = speed_limit;
      ln.capacity = capacity;
      ln.direction = arm;
      ln.turn_role = static_cast<Turn>(t);
      lk.lanes[static_cast<std::size_t>(t)] = ln.id;
      net.lanes.push_back(ln);
    }
    net.links.push_back(lk);
    if (lk.is_source()) net.source_links.push_back(lk.id);
    if (lk.is_sink()) net.sink_links.push_back(lk.id);
    return lk.id;
  };

  // Every intersection keeps all four arms; arms without a neighbor carry a
  // boundary source (inbound) and sink (outbound) link.
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const NodeId v = detail::grid_node(r, c, cols);
      auto& it = net.intersections[static_cast<std::size_t>(v)];
      for (int bi = 0; bi < 4; ++bi) {
        const Bearing out_b = static_cast<Bearing>(bi);
        int nr, nc;
        const bool interior = detail::grid_step(r, c, rows, cols, out_b, nr, nc);
        const NodeId nb = interior ? detail::grid_node(nr, nc, cols) : kOutside;
        it.out_links[static_cast<std::size_t>(bi)] = add_link(v, nb, out_b);
        if (!interior) {
          // inbound source through the same arm, traveling the opposite way
          const Bearing in_b = heading_of(static_cast<Approach>(bi));
          it.in_links[static_cast<std::size_t>(bi)] = add_link(kOutside, v, in_b);
        }
        if (interior && nb != kOutside) {
          it.neighbors.push_back(nb);
        }
      }
    }
  }
  // interior in-links are the reverse out-links of neighbors
  for (auto& it : net.intersections) {
    for (int a = 0; a < 4; ++a) {
      if (it.in_links[static_cast<std::size_t>(a)] >= 0) continue;
      // arm a receives traffic heading opposite to a
      const Bearing inbound = heading_of(static_cast<Approach>(a));
      for (const auto& lk : net.links) {
        if (lk.to == it.id && lk.bearing == inbound) {
          it.in_links[static_cast<std::size_t>(a)] = lk.id;
          break;
        }
      }
      if (it.in_links[static_cast<std::size_t>(a)] < 0)
        throw std::logic_error("build_grid_network: missing in-link");
    }
  }

  for (auto& it : net.intersections) {
    std::sort(it.neighbors.begin(), it.neighbors.end(), [&](NodeId a, NodeId b) {
      const auto& ia = net.intersection(a);
      const auto& ib = net.intersection(b);
      const double da = std::hypot(ia.x - it.x, ia.y - it.y);
      const double db = std::hypot(ib.x - it.x, ib.y - it.y);
      if (da != db) return da < db;
      return a < b;
    });

    for (int a = 0; a < 4; ++a) {
      const Link& in = net.link(it.in_links[static_cast<std::size_t>(a)]);
      for (int t = 0; t < kLanesPerLink; ++t) {
        it.incoming.push_back(in.lanes[static_cast<std::size_t>(t)]);
        Movement m;
        m.approach = static_cast<Approach>(a);
        m.turn = static_cast<Turn>(t);
        m.in_lane = in.lanes[static_cast<std::size_t>(t)];
        const Bearing out_b = turn_heading(heading_of(m.approach), m.turn);
        m.out_link = it.out_links[static_cast<std::size_t>(out_b)];
        m.out_lane = net.link(m.out_link).lanes[static_cast<std::size_t>(t)];
        it.movements.push_back(m);
      }
      const Link& out = net.link(it.out_links[static_cast<std::size_t>(a)]);
      for (int t = 0; t < kLanesPerLink; ++t) it.outgoing.push_back(out.lanes[static_cast<std::size_t>(t)]);
    }

    const auto& specs = standard_phase_set();
    for (int p = 0; p < kNumPhases; ++p) {
      Phase ph;
      ph.index = p;
      for (const auto& [app, turn] : specs[static_cast<std::size_t>(p)].moves) {
        for (const auto& m : it.movements)
          if (m.approach == app && m.turn == turn) ph.movements.push_back(m);
      }
      for (const auto& m : it.movements)
        if (m.turn == Turn::Right) ph.movements.push_back(m);
      it.phases[static_cast<std::size_t>(p)] = std::move(ph);
    }
    for (int p = 0; p < kNumPhases; ++p) {
      auto& row = it.green[static_cast<std::size_t>(p)];
      row.fill(false);
      for (const auto& m : it.phases[static_cast<std::size_t>(p)].movements)
        for (int s = 0; s < kIncomingLanes; ++s)
          if (it.incoming[static_cast<std::size_t>(s)] == m.in_lane) row[static_cast<std::size_t>(s)] = true;
    }
  }

  net.lane_owner.assign(net.lanes.size(), -1);
  net.lane_slot.assign(net.lanes.size(), -1);
  for (const auto& it : net.intersections)
    for (int s = 0; s < kIncomingLanes; ++s) {
      const LaneId ln = it.incoming[static_cast<std::size_t>(s)];
      net.lane_owner[static_cast<std::size_t>(ln)] = it.id;
      net.lane_slot[static_cast<std::size_t>(ln)] = s;
    }

  net.adjacency.assign(static_cast<std::size_t>(n), std::vector<bool>(static_cast<std::size_t>(n), false));
  for (const auto& it : net.intersections)
    for (NodeId nb : it.neighbors) net.adjacency[static_cast<std::size_t>(it.id)][static_cast<std::size_t>(nb)] = true;

  partition_regions(net, 1, 1);
  return net;
}

// Total pressure of a phase: sum over its signalized movements of
// (upstream count - downstream count). Right turns are unsignalized and
// excluded.
inline double phase_pressure_dense(const std::vector<double>& lane_counts, const Phase& phase) {
  double p = 0.0;
  for (const auto& m : phase.movements) {
    if (m.turn == Turn::Right) continue;
    p += lane_counts[static_cast<std::size_t>(m.in_lane)] - lane_counts[static_cast<std::size_t>(m.out_lane)];
  }
  return p;
}

inline double phase_pressure(const std::unordered_map<LaneId, double>& queues,
                             const Intersection& intersection, const Phase& phase) {
  (void)intersection;
  double p = 0.0;
  for (const auto& m : phase.movements) {
    if (m.turn == Turn::Right) continue;
    auto qi = queues.find(m.in_lane);
    auto qj = queues.find(m.out_lane);
    if (qi == queues.end() || qj == queues.end())
      throw std::invalid_argument("phase_pressure: queue count missing for lane " +
                                  std::to_string(qi == queues.end() ? m.in_lane : m.out_lane));
    p += qi->second - qj->second;
  }
  return p;
}

}  // namespace hilight
