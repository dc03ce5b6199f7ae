#pragma once

#include <cstdint>
#include <cstring>
#include <deque>
#include <limits>
#include <numeric>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "hilight/common.hpp"
#include "hilight/network.hpp"

namespace hilight {

constexpr int kControlIntervalS = 15;  // 5 s yellow on switch + 10 s green, else 15 s green
constexpr int kYellowS = 5;
constexpr int kSaturationHeadwayS = 2;  // one discharge per lane per 2 s
constexpr double kStopSpeedThreshold = 0.1;  // m/s; below this a vehicle counts as stopped

struct FlowSpec {
  enum class Pattern { Constant, MultimodalGaussian, PeakTransition, HolidayRush };
  struct Component {
    double peak_time = 0.0;  // s
    double std_dev = 1.0;    // s
    double weight = 1.0;
  };

  Pattern pattern = Pattern::Constant;
  double min_rate = 0.0;  // veh/s, network-wide
  double max_rate = 0.0;
  std::vector<Component> components;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(min_rate > 0.0) || !(min_rate <= max_rate))
      throw std::invalid_argument("FlowSpec: need 0 < min_rate <= max_rate");
    if (pattern == Pattern::MultimodalGaussian || pattern == Pattern::HolidayRush) {
      if (components.empty()) throw std::invalid_argument("FlowSpec: pattern needs mixture components");
      double wsum = 0.0;
      for (const auto& c : components) {
        if (!(c.std_dev > 0.0)) throw std::invalid_argument("FlowSpec: component std must be > 0");
        wsum += c.weight;
      }
      if (std::abs(wsum - 1.0) > 1e-9)
        throw std::invalid_argument("FlowSpec: component weights must sum to 1");
    }
  }
};

inline const char* to_string(FlowSpec::Pattern p) {
  switch (p) {
    case FlowSpec::Pattern::Constant: return "constant";
    case FlowSpec::Pattern::MultimodalGaussian: return "multimodal_gaussian";
    case FlowSpec::Pattern::PeakTransition: return "peak_transition";
    case FlowSpec::Pattern::HolidayRush: return "holiday_rush";
  }
  return "?";
}

inline FlowSpec::Pattern flow_pattern_from_string(const std::string& s) {
  if (s == "constant") return FlowSpec::Pattern::Constant;
  if (s == "multimodal_gaussian") return FlowSpec::Pattern::MultimodalGaussian;
  if (s == "peak_transition") return FlowSpec::Pattern::PeakTransition;
  if (s == "holiday_rush") return FlowSpec::Pattern::HolidayRush;
  throw std::invalid_argument("unknown flow pattern: " + s);
}

// lambda(t) = min + (max - min) * mixture(t), mixture scaled so its peak over
// the horizon is 1; lambda therefore stays inside [min_rate, max_rate].
inline std::vector<double> build_lambda_table(const FlowSpec& flow, int horizon_s) {
  flow.validate();
  if (horizon_s < 1) throw std::invalid_argument("build_lambda_table: horizon must be >= 1");

  auto gaussians = [&](double t) {
    double g = 0.0;
    for (const auto& c : flow.components) {
      const double z = (t - c.peak_time) / c.std_dev;
      g += c.weight * std::exp(-0.5 * z * z);
    }
    return g;
  };
  auto raw = [&](double t) -> double {
    switch (flow.pattern) {
      case FlowSpec::Pattern::Constant: return 1.0;
      case FlowSpec::Pattern::MultimodalGaussian: return gaussians(t);
      case FlowSpec::Pattern::PeakTransition: {
        // logistic ramp centered mid-episode unless a component overrides it
        double mid = horizon_s / 2.0, steep = horizon_s / 20.0;
        if (!flow.components.empty()) {
          mid = flow.components[0].peak_time;
          steep = flow.components[0].std_dev;
        }
        return 1.0 / (1.0 + std::exp(-(t - mid) / steep));
      }
      case FlowSpec::Pattern::HolidayRush: return 0.5 + gaussians(t);
    }
    return 1.0;
  };

  double peak = 0.0;
  for (int t = 0; t < horizon_s; ++t) peak = std::max(peak, raw(t));
  if (peak <= 0.0) peak = 1.0;

  std::vector<double> lambda(static_cast<std::size_t>(horizon_s));
  for (int t = 0; t < horizon_s; ++t)
    lambda[static_cast<std::size_t>(t)] = flow.min_rate + (flow.max_rate - flow.min_rate) * (raw(t) / peak);
  return lambda;
}

enum class VehiclePhase : std::uint8_t { Pending = 0, Transit = 1, Queued = 2, Departed = 3 };

struct Vehicle {
  int id = -1;
  std::vector<LaneId> route;  // lanes actually traversed; exit happens off the last one
  int route_index = 0;
  double entry_time = -1.0;
  double exit_time = -1.0;
  double lane_position = 0.0;  // meters from lane entry
  double speed = 0.0;
  double cumulative_wait = 0.0;
  double lane_wait = 0.0;  // waiting time accrued on the current lane's queue
  double odometer = 0.0;   // meters actually covered; drives delay accounting
  double theoretical_time = 0.0;
  VehiclePhase phase = VehiclePhase::Pending;
};

struct SignalState {
  int current_phase = 0;
  int pending_phase = 0;
  int time_in_phase = 0;
  int yellow_remaining = 0;
};

// Per-intersection counters for the control interval in flight.
struct IntervalStats {
  double discharges = 0.0;   // vehicles that crossed the stop line
  double veh_ticks = 0.0;    // vehicle-seconds spent on incoming lanes
  double queued_ticks = 0.0; // vehicle-seconds spent queued
};

class SimState {
 public:
  const Network* net = nullptr;
  int clock = 0;
  int horizon_s = 0;

  std::vector<Vehicle> vehicles;  // indexed by id; includes pending and departed
  std::vector<int> departed;      // ids in exit order
  std::vector<std::deque<int>> lane_queue;    // queued vehicle ids, head first
  std::vector<std::deque<int>> lane_transit;  // free-flow ids, furthest along first
  std::vector<SignalState> signals;
  std::vector<std::deque<int>> pending;  // per source link (net->source_links order)
  std::vector<int> next_discharge_tick;  // per lane
  std::vector<IntervalStats> interval;   // per intersection
  std::vector<double> lambda_table;
  long long spawned = 0;
  long long active = 0;
  Rng rng;

  // routing support, derived deterministically from the network
  std::vector<std::array<LinkId, 3>> link_succ;      // by Turn; -1 when absent
  std::vector<std::vector<int>> sink_dist;           // [sink index][link] hop count, -1 unreachable
  std::vector<std::vector<LinkId>> sink_choices;     // valid sinks per source link

  int lane_count(LaneId l) const {
    return static_cast<int>(lane_queue[static_cast<std::size_t>(l)].size() +
                            lane_transit[static_cast<std::size_t>(l)].size());
  }
  long long pending_count() const {
    long long n = 0;
    for (const auto& q : pending) n += static_cast<long long>(q.size());
    return n;
  }
};

namespace detail {

inline void build_routing(SimState& st) {
  const Network& net = *st.net;
  const int nlinks = static_cast<int>(net.links.size());
  st.link_succ.assign(static_cast<std::size_t>(nlinks), {-1, -1, -1});
  for (const auto& lk : net.links) {
    if (lk.is_sink()) continue;
    const auto& it = net.intersection(lk.to);
    for (int t = 0; t < 3; ++t) {
      const Bearing out_b = turn_heading(lk.bearing, static_cast<Turn>(t));
      st.link_succ[static_cast<std::size_t>(lk.id)][static_cast<std::size_t>(t)] =
          it.out_links[static_cast<std::size_t>(out_b)];
    }
  }
  std::vector<std::vector<LinkId>> rev(static_cast<std::size_t>(nlinks));
  for (int l = 0; l < nlinks; ++l)
    for (LinkId s : st.link_succ[static_cast<std::size_t>(l)])
      if (s >= 0) rev[static_cast<std::size_t>(s)].push_back(l);

  st.sink_dist.assign(net.sink_links.size(), std::vector<int>(static_cast<std::size_t>(nlinks), -1));
  for (std::size_t k = 0; k < net.sink_links.size(); ++k) {
    auto& dist = st.sink_dist[k];
    std::deque<LinkId> frontier{net.sink_links[k]};
    dist[static_cast<std::size_t>(net.sink_links[k])] = 0;
    while (!frontier.empty()) {
      const LinkId cur = frontier.front();
      frontier.pop_front();
      for (LinkId p : rev[static_cast<std::size_t>(cur)])
        if (dist[static_cast<std::size_t>(p)] < 0) {
          dist[static_cast<std::size_t>(p)] = dist[static_cast<std::size_t>(cur)] + 1;
          frontier.push_back(p);
        }
    }
  }

  st.sink_choices.assign(net.source_links.size(), {});
  for (std::size_t s = 0; s < net.source_links.size(); ++s) {
    const Link& src = net.link(net.source_links[s]);
    for (std::size_t k = 0; k < net.sink_links.size(); ++k) {
      const Link& snk = net.link(net.sink_links[k]);
      // entering and leaving through the same arm of the same node is a U-turn trip
      if (snk.from == src.to && snk.bearing == static_cast<Bearing>(arrival_arm(src.bearing)))
        continue;
      if (st.sink_dist[k][static_cast<std::size_t>(src.id)] >= 0)
        st.sink_choices[s].push_back(snk.id);
    }
    if (st.sink_choices[s].empty())
      throw std::logic_error("build_routing: source link has no reachable sink");
  }
}

// Deterministic shortest lane route from a source link to a sink link.
// Successors are tried straight-first so ties favor through movements.
inline void build_route(const SimState& st, LinkId source, LinkId sink, int sink_index,
                        std::vector<LaneId>& route, double& theoretical_time) {
  const Network& net = *st.net;
  const auto& dist = st.sink_dist[static_cast<std::size_t>(sink_index)];
  route.clear();
  theoretical_time = 0.0;
  LinkId cur = source;
  static constexpr Turn kTryOrder[] = {Turn::Through, Turn::Left, Turn::Right};
  while (cur != sink) {
    LinkId next = -1;
    Turn taken = Turn::Through;
    for (Turn t : kTryOrder) {
      const LinkId cand = st.link_succ[static_cast<std::size_t>(cur)][static_cast<std::size_t>(t)];
      if (cand >= 0 && dist[static_cast<std::size_t>(cand)] == dist[static_cast<std::size_t>(cur)] - 1) {
        next = cand;
        taken = t;
        break;
      }
    }
    if (next < 0) throw std::logic_error("build_route: no descending successor");
    const Link& lk = net.link(cur);
    route.push_back(lk.lanes[static_cast<std::size_t>(taken)]);
    theoretical_time += lk.length / net.lane(lk.lanes[0]).speed_limit;
    cur = next;
  }
}

inline bool try_insert(SimState& st, int vid) {
  Vehicle& v = st.vehicles[static_cast<std::size_t>(vid)];
  const LaneId entry = v.route.front();
  if (st.lane_count(entry) >= st.net->lane(entry).capacity) return false;
  v.phase = VehiclePhase::Transit;
  v.entry_time = static_cast<double>(st.clock);
  v.lane_position = 0.0;
  v.speed = st.net->lane(entry).speed_limit;
  st.lane_transit[static_cast<std::size_t>(entry)].push_back(vid);
  ++st.active;
  return true;
}

}  // namespace detail

inline SimState init_sim_state(const Network& net, const FlowSpec& flow, int horizon_s,
                               std::uint64_t seed) {
  flow.validate();
  SimState st;
  st.net = &net;
  st.horizon_s = horizon_s;
  st.lane_queue.assign(net.lanes.size(), {});
  st.lane_transit.assign(net.lanes.size(), {});
  st.signals.assign(static_cast<std::size_t>(net.num_intersections()), SignalState{});
  st.pending.assign(net.source_links.size(), {});
  st.next_discharge_tick.assign(net.lanes.size(), 0);
  st.interval.assign(static_cast<std::size_t>(net.num_intersections()), IntervalStats{});
  st.lambda_table = build_lambda_table(flow, horizon_s);
  st.rng = Rng(mix_seed(seed, flow.seed, 0x494e4a45u /*"INJE"*/));
  detail::build_routing(st);
  return st;
}

// Draws this tick's arrivals: pending vehicles re-try first, then fresh Poisson
// draws per source link with rate lambda(t)/num_sources; saturated entry lanes
// push the vehicle onto that source's pending queue.
inline void inject_vehicles(SimState& st, const FlowSpec& flow) {
  if (st.lambda_table.empty()) st.lambda_table = build_lambda_table(flow, std::max(1, st.horizon_s));
  if (st.clock >= static_cast<int>(st.lambda_table.size())) return;
  const Network& net = *st.net;
  const double lam =
      st.lambda_table[static_cast<std::size_t>(st.clock)] / static_cast<double>(net.source_links.size());

  for (std::size_t s = 0; s < net.source_links.size(); ++s) {
    auto& waitlist = st.pending[s];
    while (!waitlist.empty() && detail::try_insert(st, waitlist.front())) waitlist.pop_front();

    const int fresh = st.rng.poisson(lam);
    for (int k = 0; k < fresh; ++k) {
      const auto& choices = st.sink_choices[s];
      const LinkId sink = choices[st.rng.uniform_int(choices.size())];
      int sink_index = -1;
      for (std::size_t j = 0; j < net.sink_links.size(); ++j)
        if (net.sink_links[j] == sink) sink_index = static_cast<int>(j);

      Vehicle v;
      v.id = static_cast<int>(st.vehicles.size());
      detail::build_route(st, net.source_links[s], sink, sink_index, v.route, v.theoretical_time);
      st.vehicles.push_back(std::move(v));
      ++st.spawned;
      if (!detail::try_insert(st, st.vehicles.back().id))
        waitlist.push_back(st.vehicles.back().id);
    }
  }
}

// One simulated second. Order: free-flow advance, stop-line discharges,
// waiting-time accrual, then signal timers and the clock.
inline void step_tick(SimState& st) {
  const Network& net = *st.net;

  for (const auto& ln : net.lanes) {
    auto& transit = st.lane_transit[static_cast<std::size_t>(ln.id)];
    auto& queue = st.lane_queue[static_cast<std::size_t>(ln.id)];
    while (!transit.empty()) {
      Vehicle& v = st.vehicles[static_cast<std::size_t>(transit.front())];
      const double tail = ln.length - kVehicleFootprintMeters * static_cast<double>(queue.size());
      const double advanced = v.lane_position + ln.speed_limit;
      if (advanced < tail) break;  // followers are no further along
      // signed: a vehicle stacked on top of another may take a slot behind
      // its free-flow position, so net displacement is the slot position
      v.odometer += tail - v.lane_position;
      v.lane_position = tail;
      v.speed = 0.0;
      v.phase = VehiclePhase::Queued;
      queue.push_back(v.id);
      transit.pop_front();
    }
    for (int vid : transit) {
      Vehicle& v = st.vehicles[static_cast<std::size_t>(vid)];
      v.odometer += ln.speed_limit;
      v.lane_position += ln.speed_limit;
    }
  }

  for (const auto& it : net.intersections) {
    const SignalState& sig = st.signals[static_cast<std::size_t>(it.id)];
    for (int slot = 0; slot < kIncomingLanes; ++slot) {
      const LaneId l = it.incoming[static_cast<std::size_t>(slot)];
      auto& queue = st.lane_queue[static_cast<std::size_t>(l)];
      if (queue.empty()) continue;
      if (st.clock < st.next_discharge_tick[static_cast<std::size_t>(l)]) continue;
      const Lane& ln = net.lane(l);
      const bool is_right = ln.turn_role == Turn::Right;
      if (!is_right) {
        if (sig.yellow_remaining > 0) continue;
        if (!it.green[static_cast<std::size_t>(sig.current_phase)][static_cast<std::size_t>(slot)]) continue;
      }
      Vehicle& v = st.vehicles[static_cast<std::size_t>(queue.front())];
      const bool last_lane = v.route_index + 1 == static_cast<int>(v.route.size());
      if (!last_lane) {
        const LaneId target = v.route[static_cast<std::size_t>(v.route_index + 1)];
        if (st.lane_count(target) >= net.lane(target).capacity) continue;  // headway not consumed
        queue.pop_front();
        v.odometer += ln.length - v.lane_position;
        ++v.route_index;
        v.lane_position = 0.0;
        v.speed = net.lane(target).speed_limit;
        v.lane_wait = 0.0;
        v.phase = VehiclePhase::Transit;
        st.lane_transit[static_cast<std::size_t>(target)].push_back(v.id);
      } else {
        queue.pop_front();
        v.odometer += ln.length - v.lane_position;
        v.speed = 0.0;
        v.phase = VehiclePhase::Departed;
        v.exit_time = static_cast<double>(st.clock + 1);
        st.departed.push_back(v.id);
        --st.active;
      }
      st.next_discharge_tick[static_cast<std::size_t>(l)] = st.clock + kSaturationHeadwayS;
      st.interval[static_cast<std::size_t>(it.id)].discharges += 1.0;
    }
  }

  for (const auto& it : net.intersections) {
    auto& stats = st.interval[static_cast<std::size_t>(it.id)];
    for (LaneId l : it.incoming) {
      auto& queue = st.lane_queue[static_cast<std::size_t>(l)];
      for (int vid : queue) {
        Vehicle& v = st.vehicles[static_cast<std::size_t>(vid)];
        v.cumulative_wait += 1.0;
        v.lane_wait += 1.0;
      }
      stats.queued_ticks += static_cast<double>(queue.size());
      stats.veh_ticks += static_cast<double>(st.lane_count(l));
    }
  }

  for (auto& sig : st.signals) {
    if (sig.yellow_remaining > 0) {
      if (--sig.yellow_remaining == 0) {
        sig.current_phase = sig.pending_phase;
        sig.time_in_phase = 0;
      }
    } else {
      ++sig.time_in_phase;
    }
  }
  ++st.clock;
}

// Commits the phase choices at a control-step boundary. A change of phase
// starts a 5 s yellow; interval counters reset here.
inline void begin_control_step(SimState& st, const std::vector<int>& actions) {
  const Network& net = *st.net;
  if (static_cast<int>(actions.size()) != net.num_intersections())
    throw std::invalid_argument("apply_actions: one action per intersection required");
  for (int a : actions)
    if (a < 0 || a >= kNumPhases)
      throw std::out_of_range("apply_actions: phase index " + std::to_string(a) + " outside [0,8)");

  for (auto& stats : st.interval) stats = IntervalStats{};
  for (std::size_t i = 0; i < st.signals.size(); ++i) {
    auto& sig = st.signals[i];
    if (sig.yellow_remaining != 0) throw std::logic_error("apply_actions: mid-yellow control step");
    if (actions[i] != sig.current_phase) {
      sig.pending_phase = actions[i];
      sig.yellow_remaining = kYellowS;
    }
  }
}

// One control step: commits the phase choices (switching costs a 5 s yellow)
// and runs 15 ticks, injecting arrivals first on each tick when a flow is given.
inline void apply_actions(SimState& st, const std::vector<int>& actions,
                          const FlowSpec* flow = nullptr) {
  begin_control_step(st, actions);
  for (int t = 0; t < kControlIntervalS; ++t) {
    if (flow != nullptr) inject_vehicles(st, *flow);
    step_tick(st);
  }
}

inline bool check_conservation(const SimState& st) {
  return st.spawned == st.active + static_cast<long long>(st.departed.size()) + st.pending_count();
}

// Mean travel time; vehicles still en route are censored at the horizon.
inline double compute_att(const std::vector<Vehicle>& departed, const std::vector<Vehicle>& active,
                          double horizon) {
  const std::size_t count = departed.size() + active.size();
  if (count == 0) throw std::invalid_argument("compute_att: no vehicles observed");
  double total = 0.0;
  for (const auto& v : departed) total += v.exit_time - v.entry_time;
  for (const auto& v : active) total += horizon - v.entry_time;
  return total / static_cast<double>(count);
}

inline double compute_adt(const std::vector<Vehicle>& departed, const std::vector<Vehicle>& active,
                          double horizon) {
  const std::size_t count = departed.size() + active.size();
  if (count == 0) throw std::invalid_argument("compute_adt: no vehicles observed");
  double total = 0.0;
  for (const auto& v : departed) total += (v.exit_time - v.entry_time) - v.theoretical_time;
  for (const auto& v : active) total += (horizon - v.entry_time) - v.theoretical_time;
  return total / static_cast<double>(count);
}

inline void collect_trips(const SimState& st, std::vector<Vehicle>& departed,
                          std::vector<Vehicle>& active) {
  departed.clear();
  active.clear();
  for (const auto& v : st.vehicles) {
    if (v.phase == VehiclePhase::Departed) departed.push_back(v);
    else if (v.phase == VehiclePhase::Transit || v.phase == VehiclePhase::Queued) active.push_back(v);
  }
}

inline double episode_att(const SimState& st) {
  std::vector<Vehicle> dep, act;
  collect_trips(st, dep, act);
  return compute_att(dep, act, static_cast<double>(st.horizon_s));
}

inline double episode_adt(const SimState& st) {
  std::vector<Vehicle> dep, act;
  collect_trips(st, dep, act);
  return compute_adt(dep, act, static_cast<double>(st.horizon_s));
}

// Round-robin controller: every intersection advances one phase per control step.
inline std::vector<int> ftc_controller(const SimState& st,
                                       const std::vector<int>& cycle_order = {},
                                       int green_s = kControlIntervalS) {
  std::vector<int> order = cycle_order;
  if (order.empty()) {
    order.resize(kNumPhases);
    std::iota(order.begin(), order.end(), 0);
  }
  if (static_cast<int>(order.size()) != kNumPhases)
    throw std::invalid_argument("ftc_controller: cycle order must list all 8 phases");
  if (green_s < kControlIntervalS) throw std::invalid_argument("ftc_controller: green below control step");
  const int step = st.clock / kControlIntervalS;
  const int slot = (step * kControlIntervalS / green_s) % kNumPhases;
  return std::vector<int>(static_cast<std::size_t>(st.net->num_intersections()),
                          order[static_cast<std::size_t>(slot)]);
}

// Greedy pressure maximizer; lane occupancy counts both queued and approaching
// vehicles. Ties resolve to the lowest phase index.
inline std::vector<int> max_pressure_controller(const SimState& st) {
  const Network& net = *st.net;
  std::vector<double> counts(net.lanes.size());
  for (std::size_t l = 0; l < net.lanes.size(); ++l)
    counts[l] = static_cast<double>(st.lane_count(static_cast<LaneId>(l)));
  std::vector<int> actions(static_cast<std::size_t>(net.num_intersections()), 0);
  for (const auto& it : net.intersections) {
    double best = -std::numeric_limits<double>::infinity();
    int best_phase = 0;
    for (int p = 0; p < kNumPhases; ++p) {
      const double pr = phase_pressure_dense(counts, it.phases[static_cast<std::size_t>(p)]);
      if (pr > best) {
        best = pr;
        best_phase = p;
      }
    }
    actions[static_cast<std::size_t>(it.id)] = best_phase;
  }
  return actions;
}

// Order-sensitive digest of the dynamic state; any divergence between two runs
// shows up here long before it shows up in metrics.
inline std::uint64_t state_digest(const SimState& st) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](std::uint64_t x) {
    h ^= x;
    h *= 0x100000001b3ull;
  };
  auto mixd = [&](double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof(bits));
    mix(bits);
  };
  mix(static_cast<std::uint64_t>(st.clock));
  mix(static_cast<std::uint64_t>(st.spawned));
  mix(static_cast<std::uint64_t>(st.active));
  for (const auto& v : st.vehicles) {
    mix(static_cast<std::uint64_t>(v.phase));
    mix(static_cast<std::uint64_t>(v.route_index));
    mixd(v.entry_time);
    mixd(v.exit_time);
    mixd(v.lane_position);
    mixd(v.cumulative_wait);
    mixd(v.lane_wait);
    mixd(v.odometer);
  }
  for (const auto& q : st.lane_queue) {
    mix(q.size());
    for (int vid : q) mix(static_cast<std::uint64_t>(vid));
  }
  for (const auto& q : st.lane_transit) {
    mix(q.size());
    for (int vid : q) mix(static_cast<std::uint64_t>(vid));
  }
  for (const auto& sig : st.signals) {
    mix(static_cast<std::uint64_t>(sig.current_phase));
    mix(static_cast<std::uint64_t>(sig.time_in_phase));
    mix(static_cast<std::uint64_t>(sig.yellow_remaining));
  }
  for (const auto& q : st.pending) {
    mix(q.size());
    for (int vid : q) mix(static_cast<std::uint64_t>(vid));
  }
  mix(st.rng.draws());
  return h;
}

}  // namespace hilight
