#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "emfd/csv.hpp"
#include "emfd/emissions.hpp"
#include "emfd/error.hpp"
#include "emfd/traffic.hpp"

namespace emfd::learn {

inline constexpr std::string_view kDensityFeature = "density";
inline constexpr std::string_view kFleetFeature = "vehtype_L1";
inline constexpr std::string_view kTargetColumn = "target";

/// Ordered feature names with the roles the explainer needs.
class FeatureSchema {
 public:
  FeatureSchema() = default;

  FeatureSchema(std::vector<std::string> names, std::string_view density_name = kDensityFeature,
                std::string_view fleet_name = kFleetFeature)
      : names_(std::move(names)) {
    std::set<std::string> seen;
    for (const auto& n : names_) {
      if (n.empty()) throw InputError("feature names must be non-empty");
      if (!seen.insert(n).second) throw InputError("duplicate feature name '" + n + "'");
    }
    auto d = index_of(density_name);
    if (!d) throw InputError("schema has no density feature '" + std::string(density_name) + "'");
    density_index_ = *d;
    fleet_index_ = index_of(fleet_name);
  }

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  std::size_t density_index() const { return density_index_; }
  std::optional<std::size_t> fleet_index() const { return fleet_index_; }

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (names_[i] == name) return i;
    }
    return std::nullopt;
  }

  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;

 private:
  std::vector<std::string> names_;
  std::size_t density_index_ = 0;
  std::optional<std::size_t> fleet_index_;
};

/// Row-major feature matrix with one emission-rate target per row.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(FeatureSchema schema) : schema_(std::move(schema)) {}

  const FeatureSchema& schema() const { return schema_; }
  std::size_t rows() const { return targets_.size(); }
  std::size_t features() const { return schema_.size(); }

  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * features(), features()};
  }
  double value(std::size_t i, std::size_t f) const { return values_[i * features() + f]; }
  std::span<const double> targets() const { return targets_; }

  void add_row(std::span<const double> x, double target) {
    if (x.size() != features()) throw InputError("row has " + std::to_string(x.size()) + " features, expected " +
                                                 std::to_string(features()));
    for (double v : x) {
      if (!std::isfinite(v)) throw InputError("non-finite feature value in dataset row " + std::to_string(rows()));
    }
    if (!std::isfinite(target)) throw InputError("non-finite target in dataset row " + std::to_string(rows()));
    values_.insert(values_.end(), x.begin(), x.end());
    targets_.push_back(target);
  }

  Dataset subset(std::span<const std::size_t> indices) const {
    Dataset out(schema_);
    out.values_.reserve(indices.size() * features());
    out.targets_.reserve(indices.size());
    for (std::size_t i : indices) {
      auto r = row(i);
      out.values_.insert(out.values_.end(), r.begin(), r.end());
      out.targets_.push_back(targets_[i]);
    }
    return out;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  FeatureSchema schema_;
  std::vector<double> values_;
  std::vector<double> targets_;
};

/// Per-tract location factor vectors (development level, street density, ...).
struct LocationFactors {
  std::vector<std::string> names;
  std::map<std::string, std::vector<double>> by_tract;
};

inline LocationFactors read_location_factors(std::istream& in) {
  if (!in) throw InputError("factor stream is not readable");
  csv::Reader reader(in);
  csv::Header h(reader.read_header());
  const std::size_t c_tract = h.require("tract_id");
  LocationFactors lf;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (i != c_tract) lf.names.push_back(h.names()[i]);
  }
  csv::Row row;
  while (reader.next(row)) {
    if (csv::is_blank(row)) continue;
    const std::size_t line = reader.record_line();
    if (row.size() != h.size()) throw InputError("factor file line " + std::to_string(line) + ": column count");
    std::vector<double> values;
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i == c_tract) continue;
      auto v = csv::parse_double(row[i]);
      if (!v) throw InputError("factor file line " + std::to_string(line) + ": non-numeric value");
      values.push_back(*v);
    }
    if (!lf.by_tract.emplace(row[c_tract], std::move(values)).second) {
      throw InputError("factor file: duplicate tract " + row[c_tract]);
    }
  }
  return lf;
}

inline void write_location_factors(std::ostream& out, const LocationFactors& lf) {
  std::vector<std::string> header{"tract_id"};
  header.insert(header.end(), lf.names.begin(), lf.names.end());
  csv::write_row(out, header);
  for (const auto& [tract, values] : lf.by_tract) {
    std::vector<std::string> fields{tract};
    for (double v : values) fields.push_back(csv::format_double(v));
    csv::write_row(out, fields);
  }
}

/// Emission states of one fleet, tagged with its indicator value
/// (0 = vintage-2018 fleet, 1 = vintage-2000-and-older fleet).
struct FleetEmissions {
  double indicator = 0.0;
  std::span<const EmissionState> states;
};

/// One row per (tract, bin, fleet): density, location factors, fleet
/// indicator -> emission rate. Rows are ordered fleet-major, then by the
/// network state order.
inline Dataset assemble_dataset(std::span<const NetworkState> network, std::span<const FleetEmissions> fleets,
                                const LocationFactors& factors) {
  std::vector<std::string> names{std::string(kDensityFeature)};
  names.insert(names.end(), factors.names.begin(), factors.names.end());
  names.emplace_back(kFleetFeature);
  Dataset ds{FeatureSchema(names)};

  std::set<std::string> missing;
  for (const auto& n : network) {
    if (!factors.by_tract.count(n.tract_id)) missing.insert(n.tract_id);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& t : missing) list += (list.empty() ? "" : ",") + t;
    throw InputError("missing location factors for tracts: " + list);
  }

  std::vector<double> x(names.size());
  for (const auto& fleet : fleets) {
    if (fleet.states.size() != network.size()) throw InputError("emission states not aligned with network states");
    for (std::size_t i = 0; i < network.size(); ++i) {
      const auto& n = network[i];
      const auto& e = fleet.states[i];
      if (n.tract_id != e.tract_id || n.bin_start != e.bin_start) {
        throw InputError("emission state key mismatch at " + n.tract_id + " " + format_rfc3339(n.bin_start));
      }
      const auto& f = factors.by_tract.at(n.tract_id);
      if (f.size() != factors.names.size()) throw InputError("incomplete factor vector for tract " + n.tract_id);
      x[0] = n.mean_density;
      std::copy(f.begin(), f.end(), x.begin() + 1);
      x.back() = fleet.indicator;
      ds.add_row(x, e.rate);
    }
  }
  return ds;
}

/// Size of the training partition: ceil(n * fraction), kept within [1, n-1].
inline std::size_t train_size(std::size_t n, double train_fraction) {
  const double exact = static_cast<double>(n) * train_fraction;
  const double nearest = std::round(exact);
  // Absorb representation error in products like 10 * 0.8.
  double size = std::abs(exact - nearest) <= 1e-9 * std::max(1.0, exact) ? nearest : std::ceil(exact);
  size = std::clamp(size, 1.0, static_cast<double>(n - 1));
  return static_cast<std::size_t>(size);
}

struct Split {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_rows;  // ascending source row indices
  std::vector<std::size_t> test_rows;
};

/// Uniform random partition by row, seeded. Each partition keeps source order.
inline Split split_train_test(const Dataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw UsageError("train fraction must lie in (0,1)");
  if (ds.rows() < 2) throw InputError("need at least 2 rows to split, have " + std::to_string(ds.rows()));
  std::vector<std::size_t> order(ds.rows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train = train_size(ds.rows(), train_fraction);
  Split s;
  s.train_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(s.train_rows.begin(), s.train_rows.end());
  std::sort(s.test_rows.begin(), s.test_rows.end());
  s.train = ds.subset(s.train_rows);
  s.test = ds.subset(s.test_rows);
  return s;
}

/// Header = schema names + `target`.
inline void write_dataset(std::ostream& out, const Dataset& ds) {
  std::vector<std::string> header = ds.schema().names();
  header.emplace_back(kTargetColumn);
  csv::write_row(out, header);
  std::vector<std::string> fields(header.size());
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    auto r = ds.row(i);
    for (std::size_t f = 0; f < r.size(); ++f) fields[f] = csv::format_double(r[f]);
    fields.back() = csv::format_double(ds.targets()[i]);
    csv::write_row(out, fields);
  }
}

inline Dataset read_dataset(std::istream& in, std::string_view density_name = kDensityFeature,
                            std::string_view fleet_name = kFleetFeature) {
  if (!in) throw InputError("dataset stream is not readable");
  csv::Reader reader(in);
  csv::Row header_row;
  try {
    header_row = reader.read_header();
  } catch (const InputError&) {
    throw InputError("dataset has no header (empty file?)");
  }
  csv::Header h(header_row);
  const std::size_t c_target = h.require(std::string(kTargetColumn));
  std::vector<std::string> names;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (i != c_target) names.push_back(h.names()[i]);
  }
  Dataset ds{FeatureSchema(names, density_name, fleet_name)};
  csv::Row row;
  std::vector<double> x(names.size());
  while (reader.next(row)) {
    if (csv::is_blank(row)) continue;
    const std::size_t line = reader.record_line();
    if (row.size() != h.size()) throw InputError("dataset line " + std::to_string(line) + ": column count");
    double target = 0.0;
    for (std::size_t i = 0, f = 0; i < row.size(); ++i) {
      auto v = csv::parse_double(row[i]);
      if (!v || !std::isfinite(*v)) throw InputError("dataset line " + std::to_string(line) + ": bad value");
      if (i == c_target) {
        target = *v;
      } else {
        x[f++] = *v;
      }
    }
    ds.add_row(x, target);
  }
  return ds;
}

}  // namespace emfd::learn
