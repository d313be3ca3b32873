#pragma once

// Speed-dependent emission-rate lookup, per-segment emissions and tract-level
// per-VMT emission rates (eMFD points).

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "emfd/csv.hpp"
#include "emfd/error.hpp"
#include "emfd/ingest.hpp"
#include "emfd/traffic.hpp"

namespace emfd {

struct RateKey {
  std::string vehicle_type;
  std::string vintage_group;
  RoadType road_type = RoadType::arterial;

  friend auto operator<=>(const RateKey&, const RateKey&) = default;
};

inline std::string describe(const RateKey& k) {
  return "(" + k.vehicle_type + ", " + k.vintage_group + ", " + std::string(to_string(k.road_type)) + ")";
}

/// Running-exhaust rates in g/mile at a fixed ascending set of speed bin
/// centers, one rate curve per (vehicle type, vintage group, road type).
/// Immutable after construction.
class EmissionRateTable {
 public:
  EmissionRateTable(std::string species, std::vector<double> speed_bin_centers,
                    std::map<RateKey, std::vector<double>> rates)
      : species_(std::move(species)), centers_(std::move(speed_bin_centers)), rates_(std::move(rates)) {
    if (centers_.empty()) throw InputError("rate table has no speed bins");
    for (std::size_t i = 0; i < centers_.size(); ++i) {
      if (!(centers_[i] > 0.0) || !std::isfinite(centers_[i])) throw InputError("speed bin centers must be positive");
      if (i > 0 && !(centers_[i] > centers_[i - 1])) {
        throw InputError("speed bin centers must be strictly ascending");
      }
    }
    for (const auto& [key, curve] : rates_) {
      if (curve.size() != centers_.size()) {
        throw InputError("rate table key " + describe(key) + " does not cover every speed bin");
      }
      for (double r : curve) {
        if (!(r >= 0.0) || !std::isfinite(r)) throw InputError("rate table key " + describe(key) + " has a bad rate");
      }
    }
  }

  const std::string& species() const { return species_; }
  const std::vector<double>& speed_bin_centers() const { return centers_; }
  const std::map<RateKey, std::vector<double>>& rates() const { return rates_; }

  bool contains(const RateKey& key) const { return rates_.count(key) != 0; }

  /// Linear interpolation between bin centers, clamped to the end rates.
  /// Throws InputError for an unknown key.
  double lookup(const RateKey& key, double speed_mph) const {
    auto it = rates_.find(key);
    if (it == rates_.end()) throw InputError("missing emission rate for " + describe(key));
    if (!(speed_mph > 0.0)) throw NumericError("rate lookup needs a positive speed");
    const auto& curve = it->second;
    if (speed_mph <= centers_.front()) return curve.front();
    if (speed_mph >= centers_.back()) return curve.back();
    const std::size_t hi = static_cast<std::size_t>(
        std::upper_bound(centers_.begin(), centers_.end(), speed_mph) - centers_.begin());
    const std::size_t lo = hi - 1;
    if (centers_[lo] == speed_mph) return curve[lo];
    const double t = (speed_mph - centers_[lo]) / (centers_[hi] - centers_[lo]);
    return curve[lo] + t * (curve[hi] - curve[lo]);
  }

 private:
  std::string species_;
  std::vector<double> centers_;
  std::map<RateKey, std::vector<double>> rates_;
};

inline double lookup_rate(const EmissionRateTable& table, const std::string& vehicle_type,
                          const std::string& vintage_group, RoadType road_type, double speed_mph) {
  return table.lookup({vehicle_type, vintage_group, road_type}, speed_mph);
}

inline constexpr std::string_view kRateTableHeader =
    "species,vehicle_type,vintage_group,road_type,speed_mph,rate_g_per_mi";

/// Reads the rows of one species from a rate table file.
inline EmissionRateTable read_rate_table(std::istream& in, const std::string& species = "CO2") {
  if (!in) throw InputError("rate table stream is not readable");
  csv::Reader reader(in);
  csv::Header h(reader.read_header());
  const std::size_t c_sp = h.require("species"), c_vt = h.require("vehicle_type"),
                    c_vg = h.require("vintage_group"), c_rt = h.require("road_type"),
                    c_speed = h.require("speed_mph"), c_rate = h.require("rate_g_per_mi");
  std::map<RateKey, std::map<double, double>> points;
  std::set<double> speeds;
  csv::Row row;
  while (reader.next(row)) {
    if (csv::is_blank(row)) continue;
    const std::size_t line = reader.record_line();
    const std::string where = "rate table line " + std::to_string(line);
    if (row.size() != h.size()) throw InputError(where + ": column count");
    if (row[c_sp] != species) continue;
    auto road = parse_road_type(row[c_rt]);
    if (!road) throw InputError(where + ": unknown road type '" + row[c_rt] + "'");
    auto speed = csv::parse_double(row[c_speed]);
    auto rate = csv::parse_double(row[c_rate]);
    if (!speed || !rate) throw InputError(where + ": non-numeric value");
    RateKey key{row[c_vt], row[c_vg], *road};
    if (!points[key].emplace(*speed, *rate).second) {
      throw InputError(where + ": duplicate speed for " + describe(key));
    }
    speeds.insert(*speed);
  }
  if (points.empty()) throw InputError("rate table has no rows for species " + species);
  std::vector<double> centers(speeds.begin(), speeds.end());
  std::map<RateKey, std::vector<double>> rates;
  for (auto& [key, curve] : points) {
    if (curve.size() != centers.size()) {
      throw InputError("rate table key " + describe(key) + " does not cover every speed bin");
    }
    std::vector<double>& out = rates[key];
    for (const auto& [s, r] : curve) out.push_back(r);
  }
  return EmissionRateTable(species, std::move(centers), std::move(rates));
}

inline void write_rate_table(std::ostream& out, const EmissionRateTable& table) {
  out << kRateTableHeader << '\n';
  const auto& centers = table.speed_bin_centers();
  for (const auto& [key, curve] : table.rates()) {
    for (std::size_t i = 0; i < centers.size(); ++i) {
      csv::write_row(out, {table.species(), key.vehicle_type, key.vintage_group,
                           std::string(to_string(key.road_type)), csv::format_double(centers[i]),
                           csv::format_double(curve[i])});
    }
  }
}

struct FleetShare {
  std::string vehicle_type;
  std::string vintage_group;
  double share = 0.0;
};

/// Fractional fleet composition by (vehicle type, vintage group).
class FleetMix {
 public:
  FleetMix() = default;

  FleetMix(std::string label, const std::vector<FleetShare>& shares) : label_(std::move(label)) {
    if (shares.empty()) throw UsageError("fleet '" + label_ + "' has no entries");
    double total = 0.0;
    for (const auto& s : shares) {
      if (!(s.share >= 0.0 && s.share <= 1.0)) throw UsageError("fleet '" + label_ + "': share outside [0,1]");
      if (!shares_.emplace(std::make_pair(s.vehicle_type, s.vintage_group), s.share).second) {
        throw UsageError("fleet '" + label_ + "': duplicate entry " + s.vehicle_type + "/" + s.vintage_group);
      }
    }
    for (const auto& [k, v] : shares_) total += v;
    if (std::abs(total - 1.0) > 1e-9) throw UsageError("fleet '" + label_ + "': shares do not sum to 1");
  }

  const std::string& label() const { return label_; }
  const std::map<std::pair<std::string, std::string>, double>& shares() const { return shares_; }

  /// Share-weighted rate at one speed on one road type.
  double blended_rate(const EmissionRateTable& table, RoadType road, double speed_mph) const {
    double rate = 0.0;
    for (const auto& [key, share] : shares_) {
      rate += share * table.lookup({key.first, key.second, road}, speed_mph);
    }
    return rate;
  }

 private:
  std::string label_;
  std::map<std::pair<std::string, std::string>, double> shares_;
};

/// grams = vmt * sum_k share_k * rate_k(road type, speed)
inline double segment_emissions(const SegmentFlowState& state, const SegmentRecord& rec,
                                const EmissionRateTable& table, const FleetMix& fleet) {
  if (state.segment_id != rec.segment_id) {
    throw UsageError("segment_emissions: state and record refer to different segments");
  }
  const double rate = fleet.blended_rate(table, rec.road_type, state.speed);
  return state.vmt * rate;
}

struct SegmentEmission {
  std::string segment_id;
  std::string tract_id;
  Timestamp bin_start;
  double grams = 0.0;
  double vmt = 0.0;
};

struct EmissionState {
  std::string tract_id;
  Timestamp bin_start;
  double total_grams = 0.0;
  double total_vmt = 0.0;
  double rate = 0.0;  // g per vehicle-mile; 0 when total_vmt is 0

  friend bool operator==(const EmissionState&, const EmissionState&) = default;
};

/// VMT-weighted tract rate from segment emissions; sums run in segment_id order.
inline EmissionState aggregate_tract_emissions(std::span<const SegmentEmission> segments) {
  if (segments.empty()) throw InputError("aggregate_tract_emissions: no segments");
  std::vector<const SegmentEmission*> ordered;
  for (const auto& s : segments) {
    if (s.tract_id != segments.front().tract_id || s.bin_start != segments.front().bin_start) {
      throw InputError("aggregate_tract_emissions: segments span several tract-bins");
    }
    ordered.push_back(&s);
  }
  std::sort(ordered.begin(), ordered.end(), [](const SegmentEmission* a, const SegmentEmission* b) {
    return std::tie(a->segment_id, a->grams, a->vmt) < std::tie(b->segment_id, b->grams, b->vmt);
  });
  EmissionState e;
  e.tract_id = segments.front().tract_id;
  e.bin_start = segments.front().bin_start;
  for (const SegmentEmission* s : ordered) {
    e.total_grams += s->grams;
    e.total_vmt += s->vmt;
  }
  e.rate = e.total_vmt > 0.0 ? e.total_grams / e.total_vmt : 0.0;
  return e;
}

/// Per-segment emissions for every record (record order).
inline std::vector<SegmentEmission> compute_segment_emissions(std::span<const SegmentRecord> records,
                                                              const EmissionRateTable& table,
                                                              const FleetMix& fleet,
                                                              double bin_hours = kBinHours) {
  std::vector<SegmentEmission> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    SegmentFlowState st = segment_state(rec, bin_hours);
    out.push_back({rec.segment_id, rec.tract_id, rec.bin_start, segment_emissions(st, rec, table, fleet), st.vmt});
  }
  return out;
}

/// Emission states for every tract-bin in `records`, in (tract, bin) order,
/// aligned with aggregate_network().
inline std::vector<EmissionState> aggregate_emissions(std::span<const SegmentRecord> records,
                                                      const EmissionRateTable& table, const FleetMix& fleet,
                                                      double bin_hours = kBinHours) {
  const auto per_segment = compute_segment_emissions(records, table, fleet, bin_hours);
  std::vector<EmissionState> out;
  for (const auto& [key, idx] : group_by_tract_bin(records)) {
    std::vector<SegmentEmission> group;
    group.reserve(idx.size());
    for (std::size_t i : idx) group.push_back(per_segment[i]);
    out.push_back(aggregate_tract_emissions(group));
  }
  return out;
}

struct EmfdPoint {
  Timestamp bin_start;
  double density = 0.0;
  double rate = 0.0;
};

struct EmfdPointSet {
  std::string tract_id;
  std::string fleet_label;
  std::vector<EmfdPoint> points;
};

/// Pairs each bin's mean density with its emission rate for one tract.
inline EmfdPointSet build_emfd(std::span<const NetworkState> network, std::span<const EmissionState> emissions,
                               const std::string& fleet_label) {
  EmfdPointSet set;
  set.fleet_label = fleet_label;
  if (network.size() != emissions.size()) throw InputError("build_emfd: network and emission states differ in length");
  if (network.empty()) return set;
  set.tract_id = network.front().tract_id;
  std::map<Timestamp, const EmissionState*> by_bin;
  for (const auto& e : emissions) {
    if (e.tract_id != set.tract_id) throw InputError("build_emfd: emission state for another tract " + e.tract_id);
    if (!by_bin.emplace(e.bin_start, &e).second) throw InputError("build_emfd: duplicate emission bin");
  }
  for (const auto& n : network) {
    if (n.tract_id != set.tract_id) throw InputError("build_emfd: mixed tract ids");
    auto it = by_bin.find(n.bin_start);
    if (it == by_bin.end()) {
      throw InputError("build_emfd: no emission state for " + n.tract_id + " at " + format_rfc3339(n.bin_start));
    }
    set.points.push_back({n.bin_start, n.mean_density, it->second->rate});
  }
  std::sort(set.points.begin(), set.points.end(),
            [](const EmfdPoint& a, const EmfdPoint& b) { return a.bin_start < b.bin_start; });
  return set;
}

/// NetworkState columns followed by total_grams,rate_g_per_veh_mi.
inline void write_emission_states(std::ostream& out, std::span<const NetworkState> network,
                                  std::span<const EmissionState> emissions) {
  if (network.size() != emissions.size()) throw InputError("emission export: misaligned tables");
  out << kNetworkStateHeader << ",total_grams,rate_g_per_veh_mi\n";
  for (std::size_t i = 0; i < network.size(); ++i) {
    if (network[i].tract_id != emissions[i].tract_id || network[i].bin_start != emissions[i].bin_start) {
      throw InputError("emission export: misaligned tables at row " + std::to_string(i));
    }
    auto fields = network_state_fields(network[i]);
    fields.push_back(csv::format_double(emissions[i].total_grams));
    fields.push_back(csv::format_double(emissions[i].rate));
    csv::write_row(out, fields);
  }
}

inline std::vector<EmissionState> read_emission_states(std::istream& in) {
  if (!in) throw InputError("emission state stream is not readable");
  csv::Reader reader(in);
  csv::Header h(reader.read_header());
  const std::size_t c_tract = h.require("tract_id"), c_bin = h.require("bin_start"),
                    c_vmt = h.require("total_vmt"), c_g = h.require("total_grams"),
                    c_rate = h.require("rate_g_per_veh_mi");
  std::vector<EmissionState> out;
  csv::Row row;
  while (reader.next(row)) {
    if (csv::is_blank(row)) continue;
    const std::size_t line = reader.record_line();
    if (row.size() != h.size()) throw InputError("line " + std::to_string(line) + ": column count");
    EmissionState e;
    e.tract_id = row[c_tract];
    e.bin_start = detail::require_timestamp(row, c_bin, line);
    e.total_vmt = detail::require_double(row, c_vmt, line);
    e.total_grams = detail::require_double(row, c_g, line);
    e.rate = detail::require_double(row, c_rate, line);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace emfd
