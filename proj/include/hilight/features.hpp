#pragma once

#include <Eigen/Core>
#include <deque>
#include <stdexcept>
#include <vector>

#include "hilight/common.hpp"
#include "hilight/network.hpp"
#include "hilight/simulator.hpp"

namespace hilight {

constexpr int kObservationDim = 66;
constexpr int kRegionalStateDim = 4;
constexpr int kHistorySteps = 20;
constexpr double kWaitClipS = 300.0;  // waiting-time normalizer and clip

// Observation layout: five 12-wide per-lane blocks in the incoming-lane order
// (N-L,N-T,N-R, E..., S..., W...), then six intersection-level scalars.
enum ObservationOffset {
  kObsCarNum = 0,
  kObsQueueLen = 12,
  kObsOccupancy = 24,
  kObsStopCarNum = 36,
  kObsWaitingTime = 48,
  kObsFlow = 60,
  kObsAvgSpeed = 61,
  kObsPressure = 62,
  kObsDelay = 63,
  kObsPhaseIndex = 64,
  kObsTimeInPhase = 65,
};

// Waiting time of the queue head on a lane; 0 when nothing queues there.
inline double head_wait(const SimState& st, LaneId l) {
  const auto& q = st.lane_queue[static_cast<std::size_t>(l)];
  if (q.empty()) return 0.0;
  return st.vehicles[static_cast<std::size_t>(q.front())].lane_wait;
}

namespace detail {

inline int stopped_on_lane(const SimState& st, LaneId l) {
  int n = 0;
  for (int vid : st.lane_queue[static_cast<std::size_t>(l)])
    if (st.vehicles[static_cast<std::size_t>(vid)].speed < kStopSpeedThreshold) ++n;
  for (int vid : st.lane_transit[static_cast<std::size_t>(l)])
    if (st.vehicles[static_cast<std::size_t>(vid)].speed < kStopSpeedThreshold) ++n;
  return n;
}

// Travel time the vehicle would have needed to reach its current position at
// the speed limit; compared against wall time elapsed to measure delay.
inline double ideal_elapsed(const SimState& st, const Vehicle& v) {
  double t = 0.0;
  for (int k = 0; k < v.route_index; ++k) {
    const Lane& ln = st.net->lane(v.route[static_cast<std::size_t>(k)]);
    t += ln.length / ln.speed_limit;
  }
  const Lane& cur = st.net->lane(v.route[static_cast<std::size_t>(v.route_index)]);
  return t + v.lane_position / cur.speed_limit;
}

// Sum over all movements of (vehicles on the incoming lane - vehicles on the
// paired outgoing lane); raw, unnormalized.
inline double intersection_pressure(const SimState& st, const Intersection& it) {
  double p = 0.0;
  for (const auto& mv : it.movements)
    p += static_cast<double>(st.lane_count(mv.in_lane)) -
         static_cast<double>(st.lane_count(mv.out_lane));
  return p;
}

inline double incoming_capacity(const SimState& st, const Intersection& it) {
  double c = 0.0;
  for (LaneId l : it.incoming) c += static_cast<double>(st.net->lane(l).capacity);
  return c > 0.0 ? c : 1.0;
}

}  // namespace detail

inline Eigen::VectorXd intersection_observation(const SimState& st, const Intersection& it) {
  const Network& net = *st.net;
  Eigen::VectorXd obs = Eigen::VectorXd::Zero(kObservationDim);

  double speed_sum = 0.0, delay_sum = 0.0;
  int veh_count = 0;
  for (std::size_t slot = 0; slot < it.incoming.size() && slot < kIncomingLanes; ++slot) {
    const LaneId l = it.incoming[slot];
    const Lane& ln = net.lane(l);
    const auto& queue = st.lane_queue[static_cast<std::size_t>(l)];
    const int count = st.lane_count(l);
    const double cap = static_cast<double>(ln.capacity);

    obs(kObsCarNum + static_cast<int>(slot)) = clamp01(count / cap);
    obs(kObsQueueLen + static_cast<int>(slot)) =
        clamp01(kVehicleFootprintMeters * static_cast<double>(queue.size()) / ln.length);
    obs(kObsOccupancy + static_cast<int>(slot)) =
        clamp01(kVehicleFootprintMeters * static_cast<double>(count) / ln.length);
    obs(kObsStopCarNum + static_cast<int>(slot)) = clamp01(detail::stopped_on_lane(st, l) / cap);
    obs(kObsWaitingTime + static_cast<int>(slot)) = clamp01(head_wait(st, l) / kWaitClipS);

    for (const auto& pool : {&st.lane_queue, &st.lane_transit}) {
      for (int vid : (*pool)[static_cast<std::size_t>(l)]) {
        const Vehicle& v = st.vehicles[static_cast<std::size_t>(vid)];
        speed_sum += v.speed / ln.speed_limit;
        const double elapsed = static_cast<double>(st.clock) - v.entry_time;
        const double gap = (detail::ideal_elapsed(st, v) - elapsed) / kWaitClipS;
        delay_sum += std::max(-1.0, std::min(0.0, gap));
        ++veh_count;
      }
    }
  }

  // Saturation discharge bound: one vehicle per lane per headway over the interval.
  const double sat_flow = static_cast<double>(kIncomingLanes) *
                          static_cast<double>(kControlIntervalS) / static_cast<double>(kSaturationHeadwayS);
  const auto& stats = st.interval[static_cast<std::size_t>(it.id)];
  obs(kObsFlow) = clamp01(stats.discharges / sat_flow);
  obs(kObsAvgSpeed) = veh_count > 0 ? clamp01(speed_sum / veh_count) : 0.0;
  const double cap_total = detail::incoming_capacity(st, it);
  obs(kObsPressure) =
      std::max(-1.0, std::min(1.0, detail::intersection_pressure(st, it) / cap_total));
  obs(kObsDelay) = veh_count > 0 ? delay_sum / veh_count : 0.0;

  const SignalState& sig = st.signals[static_cast<std::size_t>(it.id)];
  obs(kObsPhaseIndex) = static_cast<double>(sig.current_phase) / (kNumPhases - 1);
  obs(kObsTimeInPhase) = clamp01(static_cast<double>(sig.time_in_phase) / kWaitClipS);
  return obs;
}

inline Eigen::MatrixXd observe_all(const SimState& st) {
  const Network& net = *st.net;
  Eigen::MatrixXd obs(net.num_intersections(), kObservationDim);
  for (const auto& it : net.intersections)
    obs.row(it.id) = intersection_observation(st, it).transpose();
  return obs;
}

// Episode-scoped peak tracker; values are reported relative to the largest
// magnitude seen so far, which keeps unbounded sums inside [0, 1].
struct RunningMax {
  double peak = 0.0;
  double normalize(double x) {
    peak = std::max(peak, std::abs(x));
    return peak > 0.0 ? x / peak : 0.0;
  }
};

struct RegionalState {
  double stop_car_num = 0.0;
  double waiting_time = 0.0;
  double centroid_x = 0.0;
  double centroid_y = 0.0;

  Eigen::Vector4d as_vector() const {
    return Eigen::Vector4d(stop_car_num, waiting_time, centroid_x, centroid_y);
  }
};

namespace detail {

inline double normalized_coord(double v, double lo, double hi) {
  const double extent = hi - lo;
  if (extent <= 0.0) return 0.5;  // degenerate axis (single row/column)
  return (v - lo) / extent;
}

}  // namespace detail

inline RegionalState regional_state(const SimState& st, const Region& region,
                                    RunningMax& wait_scale) {
  if (region.members.empty()) throw std::invalid_argument("regional_state: empty region");
  const Network& net = *st.net;

  double stop_norm_sum = 0.0, wait_sum = 0.0;
  for (NodeId id : region.members) {
    const Intersection& it = net.intersection(id);
    double stopped = 0.0, cap = 0.0;
    for (LaneId l : it.incoming) {
      stopped += static_cast<double>(detail::stopped_on_lane(st, l));
      cap += static_cast<double>(net.lane(l).capacity);
      wait_sum += head_wait(st, l);
    }
    stop_norm_sum += cap > 0.0 ? stopped / cap : 0.0;
  }

  double min_x, min_y, max_x, max_y;
  net.bounding_box(min_x, min_y, max_x, max_y);

  RegionalState rs;
  rs.stop_car_num = stop_norm_sum / static_cast<double>(region.members.size());
  rs.waiting_time = wait_scale.normalize(wait_sum);
  rs.centroid_x = detail::normalized_coord(region.centroid_x, min_x, max_x);
  rs.centroid_y = detail::normalized_coord(region.centroid_y, min_y, max_y);
  return rs;
}

// One row per region, columns (stop_car_num, waiting_time, centroid_x, centroid_y).
inline Eigen::MatrixXd regional_snapshot(const SimState& st, RunningMax& wait_scale) {
  const Network& net = *st.net;
  Eigen::MatrixXd snap(net.num_regions(), kRegionalStateDim);
  for (const auto& region : net.regions)
    snap.row(region.id) = regional_state(st, region, wait_scale).as_vector().transpose();
  return snap;
}

// Fixed-capacity ring of the last 20 regional snapshots, zero-padded while
// warming up. view() lists snapshots oldest first, newest last.
class RegionalHistory {
 public:
  explicit RegionalHistory(int num_regions) : regions_(num_regions) {
    if (num_regions < 1) throw std::invalid_argument("RegionalHistory: need >= 1 region");
  }

  void push(const Eigen::MatrixXd& snapshot) {
    if (snapshot.rows() != regions_ || snapshot.cols() != kRegionalStateDim)
      throw std::invalid_argument("RegionalHistory: snapshot shape mismatch");
    buf_.push_back(snapshot);
    if (static_cast<int>(buf_.size()) > kHistorySteps) buf_.pop_front();
  }

  std::vector<Eigen::MatrixXd> view() const {
    std::vector<Eigen::MatrixXd> out;
    out.reserve(kHistorySteps);
    for (int k = static_cast<int>(buf_.size()); k < kHistorySteps; ++k)
      out.push_back(Eigen::MatrixXd::Zero(regions_, kRegionalStateDim));
    for (const auto& s : buf_) out.push_back(s);
    return out;
  }

  int size() const { return static_cast<int>(buf_.size()); }
  int num_regions() const { return regions_; }
  void clear() { buf_.clear(); }

 private:
  int regions_;
  std::deque<Eigen::MatrixXd> buf_;
};

// Network totals the sub-goals are scored against: summed head-vehicle waits
// and the total queued vehicle count, in native units.
struct GlobalAggregates {
  double waiting_s = 0.0;
  double queue_veh = 0.0;
};

inline GlobalAggregates global_aggregates(const SimState& st) {
  GlobalAggregates agg;
  for (const auto& it : st.net->intersections) {
    for (LaneId l : it.incoming) {
      agg.waiting_s += head_wait(st, l);
      agg.queue_veh += static_cast<double>(st.lane_queue[static_cast<std::size_t>(l)].size());
    }
  }
  return agg;
}

// Per-intersection reward ingredients, each normalized into [0, 1].
struct RewardTerms {
  double ql = 0.0;  // queue occupancy
  double wt = 0.0;  // summed head-vehicle waits
  double dt = 0.0;  // fraction of vehicle time spent stopped over the interval
  double ps = 0.0;  // pressure magnitude
  double ss = 0.0;  // mean speed relative to the limit
};

inline RewardTerms reward_terms(const SimState& st, const Intersection& it) {
  const Network& net = *st.net;
  RewardTerms terms;

  double queued = 0.0, wait_sum = 0.0, speed_sum = 0.0;
  int veh_count = 0;
  for (LaneId l : it.incoming) {
    queued += static_cast<double>(st.lane_queue[static_cast<std::size_t>(l)].size());
    wait_sum += head_wait(st, l);
    const Lane& ln = net.lane(l);
    for (const auto& pool : {&st.lane_queue, &st.lane_transit}) {
      for (int vid : (*pool)[static_cast<std::size_t>(l)]) {
        speed_sum += st.vehicles[static_cast<std::size_t>(vid)].speed / ln.speed_limit;
        ++veh_count;
      }
    }
  }

  const double cap_total = detail::incoming_capacity(st, it);
  const auto& stats = st.interval[static_cast<std::size_t>(it.id)];
  terms.ql = clamp01(queued / cap_total);
  terms.wt = clamp01(wait_sum / (kWaitClipS * kIncomingLanes));
  terms.dt = stats.veh_ticks > 0.0 ? clamp01(stats.queued_ticks / stats.veh_ticks) : 0.0;
  terms.ps = clamp01(std::abs(detail::intersection_pressure(st, it)) / cap_total);
  terms.ss = veh_count > 0 ? clamp01(speed_sum / veh_count) : 0.0;
  return terms;
}

}  // namespace hilight
