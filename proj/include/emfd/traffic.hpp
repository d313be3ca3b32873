#pragma once

// Segment flow states and their lane-mile weighted aggregation into tract-level
// network states (MFD points).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "emfd/csv.hpp"
#include "emfd/error.hpp"
#include "emfd/ingest.hpp"
#include "emfd/timeutil.hpp"

namespace emfd {

struct SegmentFlowState {
  std::string segment_id;
  std::string tract_id;
  Timestamp bin_start;
  double flow_per_lane = 0.0;  // veh/hr/lane
  double density = 0.0;        // veh/lane/mile
  double speed = 0.0;          // mph
  double vmt = 0.0;            // vehicle-miles
  double vht = 0.0;            // vehicle-hours
  double lane_miles = 0.0;
};

/// Flow, density and activity of one segment over one bin.
/// flow = volume / (lanes * bin_hours); density = flow / speed;
/// vmt = volume * length; vht = vmt / speed.
inline SegmentFlowState segment_state(const SegmentRecord& rec, double bin_hours = kBinHours) {
  if (!(bin_hours > 0.0)) throw UsageError("bin_hours must be positive");
  if (rec.mean_speed_mph <= 0.0 && rec.volume_veh > 0.0) {
    throw NumericError("segment " + rec.segment_id + ": zero speed with positive volume");
  }
  SegmentFlowState s;
  s.segment_id = rec.segment_id;
  s.tract_id = rec.tract_id;
  s.bin_start = rec.bin_start;
  s.speed = rec.mean_speed_mph;
  s.lane_miles = rec.lanes * rec.length_mi;
  if (rec.volume_veh > 0.0) {
    s.flow_per_lane = rec.volume_veh / (rec.lanes * bin_hours);
    s.density = s.flow_per_lane / s.speed;
    s.vmt = rec.volume_veh * rec.length_mi;
    s.vht = s.vmt / s.speed;
  }
  return s;
}

/// One MFD point: a tract's aggregated traffic state in one bin.
struct NetworkState {
  std::string tract_id;
  Timestamp bin_start;
  double mean_flow = 0.0;
  double mean_density = 0.0;
  double mean_speed = 0.0;  // 0 is the zero-flow sentinel
  double total_vmt = 0.0;
  double total_vht = 0.0;
  double total_lane_miles = 0.0;
  std::size_t segment_count = 0;

  friend bool operator==(const NetworkState&, const NetworkState&) = default;
};

namespace detail {

inline bool segment_order(const SegmentFlowState* a, const SegmentFlowState* b) {
  return std::tie(a->segment_id, a->flow_per_lane, a->density, a->speed, a->vmt, a->lane_miles) <
         std::tie(b->segment_id, b->flow_per_lane, b->density, b->speed, b->vmt, b->lane_miles);
}

}  // namespace detail

/// Aggregates the segments of one tract-bin. Sums run in segment_id order so
/// the result does not depend on input order.
inline NetworkState aggregate_tract(std::span<const SegmentFlowState> states, const std::string& tract_id,
                                    Timestamp bin_start) {
  if (states.empty()) throw InputError("aggregate_tract: no segments for tract " + tract_id);
  std::vector<const SegmentFlowState*> ordered;
  ordered.reserve(states.size());
  for (const auto& s : states) {
    if (s.tract_id != tract_id) {
      throw InputError("aggregate_tract: segment " + s.segment_id + " belongs to tract " + s.tract_id +
                       ", expected " + tract_id);
    }
    if (s.bin_start != bin_start) {
      throw InputError("aggregate_tract: segment " + s.segment_id + " has a different bin");
    }
    ordered.push_back(&s);
  }
  std::sort(ordered.begin(), ordered.end(), detail::segment_order);

  NetworkState n;
  n.tract_id = tract_id;
  n.bin_start = bin_start;
  n.segment_count = ordered.size();
  double density_weighted = 0.0;
  double flow_weighted = 0.0;
  for (const SegmentFlowState* s : ordered) {
    density_weighted += s->density * s->lane_miles;
    flow_weighted += s->flow_per_lane * s->lane_miles;
    n.total_vmt += s->vmt;
    n.total_vht += s->vht;
    n.total_lane_miles += s->lane_miles;
  }
  if (n.total_lane_miles <= 0.0) throw NumericError("aggregate_tract: zero lane-miles in tract " + tract_id);
  if (n.total_vht > 0.0) {
    n.mean_density = density_weighted / n.total_lane_miles;
    n.mean_flow = flow_weighted / n.total_lane_miles;
    n.mean_speed = n.total_vmt / n.total_vht;
  }
  return n;
}

/// (tract_id, bin_start) group key, ordered tract first.
struct TractBin {
  std::string tract_id;
  Timestamp bin_start;

  friend auto operator<=>(const TractBin&, const TractBin&) = default;
};

/// Record indices grouped by tract-bin, groups in (tract, bin) order.
inline std::map<TractBin, std::vector<std::size_t>> group_by_tract_bin(std::span<const SegmentRecord> records) {
  std::map<TractBin, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) {
    groups[{records[i].tract_id, records[i].bin_start}].push_back(i);
  }
  return groups;
}

/// Network states for every tract-bin present in `records`, in (tract, bin) order.
inline std::vector<NetworkState> aggregate_network(std::span<const SegmentRecord> records,
                                                   double bin_hours = kBinHours) {
  std::vector<NetworkState> out;
  for (const auto& [key, idx] : group_by_tract_bin(records)) {
    std::vector<SegmentFlowState> states;
    states.reserve(idx.size());
    for (std::size_t i : idx) states.push_back(segment_state(records[i], bin_hours));
    out.push_back(aggregate_tract(states, key.tract_id, key.bin_start));
  }
  return out;
}

struct MfdPoint {
  Timestamp bin_start;
  double density = 0.0;
  double flow = 0.0;
};

struct MfdPointSet {
  std::string tract_id;
  std::vector<MfdPoint> points;
};

/// Flow-density scatter for one tract, ordered by bin.
inline MfdPointSet build_mfd(std::span<const NetworkState> states) {
  MfdPointSet set;
  if (states.empty()) return set;
  set.tract_id = states.front().tract_id;
  for (const auto& s : states) {
    if (s.tract_id != set.tract_id) throw InputError("build_mfd: mixed tract ids");
    set.points.push_back({s.bin_start, s.mean_density, s.mean_flow});
  }
  std::sort(set.points.begin(), set.points.end(),
            [](const MfdPoint& a, const MfdPoint& b) { return a.bin_start < b.bin_start; });
  for (std::size_t i = 1; i < set.points.size(); ++i) {
    if (set.points[i].bin_start == set.points[i - 1].bin_start) {
      throw InputError("build_mfd: duplicate bin " + format_rfc3339(set.points[i].bin_start));
    }
  }
  return set;
}

struct CapacityEstimate {
  double capacity_flow = 0.0;     // veh/hr/lane
  double critical_density = 0.0;  // veh/lane/mile, center of the winning bin
};

inline constexpr double kDefaultCapacityBinWidth = 2.0;
inline constexpr std::size_t kMinCapacityPoints = 10;

/// Network capacity as the largest per-density-bin median flow.
inline CapacityEstimate estimate_capacity(const MfdPointSet& mfd, double density_bin_width = kDefaultCapacityBinWidth) {
  if (!(density_bin_width > 0.0)) throw UsageError("density bin width must be positive");
  if (mfd.points.size() < kMinCapacityPoints) {
    throw NumericError("estimate_capacity: need at least " + std::to_string(kMinCapacityPoints) +
                       " points, tract " + mfd.tract_id + " has " + std::to_string(mfd.points.size()));
  }
  std::map<std::int64_t, std::vector<double>> bins;
  for (const auto& p : mfd.points) {
    bins[static_cast<std::int64_t>(std::floor(p.density / density_bin_width))].push_back(p.flow);
  }
  CapacityEstimate best;
  bool first = true;
  for (auto& [index, flows] : bins) {
    std::sort(flows.begin(), flows.end());
    const std::size_t n = flows.size();
    const double median = n % 2 ? flows[n / 2] : 0.5 * (flows[n / 2 - 1] + flows[n / 2]);
    if (first || median > best.capacity_flow) {
      best.capacity_flow = median;
      best.critical_density = (static_cast<double>(index) + 0.5) * density_bin_width;
      first = false;
    }
  }
  return best;
}

inline constexpr std::string_view kNetworkStateHeader =
    "tract_id,bin_start,mean_density,mean_flow,mean_speed,total_vmt,total_vht,total_lane_miles,segment_count";

inline std::vector<std::string> network_state_fields(const NetworkState& n) {
  return {n.tract_id,
          format_rfc3339(n.bin_start),
          csv::format_double(n.mean_density),
          csv::format_double(n.mean_flow),
          csv::format_double(n.mean_speed),
          csv::format_double(n.total_vmt),
          csv::format_double(n.total_vht),
          csv::format_double(n.total_lane_miles),
          std::to_string(n.segment_count)};
}

inline void write_network_states(std::ostream& out, std::span<const NetworkState> states) {
  out << kNetworkStateHeader << '\n';
  for (const auto& n : states) csv::write_row(out, network_state_fields(n));
}

namespace detail {

inline double require_double(const csv::Row& row, std::size_t col, std::size_t line) {
  auto v = csv::parse_double(row.at(col));
  if (!v || !std::isfinite(*v)) {
    throw InputError("line " + std::to_string(line) + ": bad numeric value '" + row.at(col) + "'");
  }
  return *v;
}

inline Timestamp require_timestamp(const csv::Row& row, std::size_t col, std::size_t line) {
  auto t = parse_rfc3339(row.at(col));
  if (!t) throw InputError("line " + std::to_string(line) + ": bad timestamp '" + row.at(col) + "'");
  return *t;
}

}  // namespace detail

/// Reads a NetworkState table. Extra columns are ignored.
inline std::vector<NetworkState> read_network_states(std::istream& in) {
  if (!in) throw InputError("network state stream is not readable");
  csv::Reader reader(in);
  csv::Header h(reader.read_header());
  const std::size_t c_tract = h.require("tract_id"), c_bin = h.require("bin_start"),
                    c_k = h.require("mean_density"), c_q = h.require("mean_flow"),
                    c_v = h.require("mean_speed"), c_vmt = h.require("total_vmt"),
                    c_vht = h.require("total_vht"), c_lm = h.require("total_lane_miles"),
                    c_n = h.require("segment_count");
  std::vector<NetworkState> out;
  csv::Row row;
  while (reader.next(row)) {
    if (csv::is_blank(row)) continue;
    const std::size_t line = reader.record_line();
    if (row.size() != h.size()) throw InputError("line " + std::to_string(line) + ": column count");
    NetworkState n;
    n.tract_id = row[c_tract];
    n.bin_start = detail::require_timestamp(row, c_bin, line);
    n.mean_density = detail::require_double(row, c_k, line);
    n.mean_flow = detail::require_double(row, c_q, line);
    n.mean_speed = detail::require_double(row, c_v, line);
    n.total_vmt = detail::require_double(row, c_vmt, line);
    n.total_vht = detail::require_double(row, c_vht, line);
    n.total_lane_miles = detail::require_double(row, c_lm, line);
    auto count = csv::parse_int(row[c_n]);
    if (!count || *count < 1) throw InputError("line " + std::to_string(line) + ": bad segment_count");
    n.segment_count = static_cast<std::size_t>(*count);
    out.push_back(std::move(n));
  }
  return out;
}

}  // namespace emfd
