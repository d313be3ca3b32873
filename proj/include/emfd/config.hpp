#pragma once

// Flat `key = value` run configuration. Lines starting with '#' are comments.
// Every default lives in RunConfig.

#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "emfd/csv.hpp"
#include "emfd/emissions.hpp"
#include "emfd/error.hpp"
#include "emfd/learn/forest.hpp"
#include "emfd/learn/gbt.hpp"
#include "emfd/learn/metrics.hpp"
#include "emfd/traffic.hpp"

namespace emfd {

class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in) {
    KeyValueConfig cfg;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string body = trim(line);
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string::npos) throw UsageError("config line " + std::to_string(n) + ": expected key = value");
      const std::string key = trim(body.substr(0, eq));
      if (key.empty()) throw UsageError("config line " + std::to_string(n) + ": empty key");
      cfg.values_[key] = trim(body.substr(eq + 1));
    }
    return cfg;
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    auto v = csv::parse_double(it->second);
    if (!v || !std::isfinite(*v)) throw UsageError("config key '" + key + "' is not a number");
    return *v;
  }

  std::int64_t get(const std::string& key, std::int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    auto v = csv::parse_int(it->second);
    if (!v) throw UsageError("config key '" + key + "' is not an integer");
    return *v;
  }

  int get(const std::string& key, int fallback) const {
    return static_cast<int>(get(key, static_cast<std::int64_t>(fallback)));
  }

  bool get(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw UsageError("config key '" + key + "' is not a boolean");
  }

  /// Sorted `key=value` lines; stable input for digests.
  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

struct FleetConfig {
  FleetMix mix;
  double indicator = 0.0;
};

/// Parses `VT/VG:share;VT/VG:share`.
inline FleetMix parse_fleet_mix(const std::string& label, const std::string& text) {
  std::vector<FleetShare> shares;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    const auto slash = item.find('/');
    const auto colon = item.rfind(':');
    if (slash == std::string::npos || colon == std::string::npos || colon < slash) {
      throw UsageError("fleet '" + label + "': expected VEHICLE/VINTAGE:share, got '" + item + "'");
    }
    auto share = csv::parse_double(item.substr(colon + 1));
    if (!share) throw UsageError("fleet '" + label + "': bad share in '" + item + "'");
    auto strip = [](std::string s) {
      s.erase(0, s.find_first_not_of(' '));
      s.erase(s.find_last_not_of(' ') + 1);
      return s;
    };
    shares.push_back({strip(item.substr(0, slash)), strip(item.substr(slash + 1, colon - slash - 1)), *share});
  }
  return FleetMix(label, shares);
}

struct RunConfig {
  std::uint64_t seed = 7;
  std::string scenario = "interaction";  // or "basic"
  int basic_tracts = 3;
  int tracts_per_group = 12;
  int days = 2;
  int segments_per_tract = 5;
  double speed_noise = 0.0;
  double volume_noise = 0.0;

  std::string species = "CO2";
  std::vector<FleetConfig> fleets;
  double utc_offset_hours = 0.0;
  double capacity_bin_width = kDefaultCapacityBinWidth;

  double train_fraction = 0.8;
  double mape_floor = learn::kDefaultMapeFloor;
  learn::GbtParams gbt;
  learn::ForestParams forest;

  std::size_t explain_max_instances = 400;
  std::vector<std::string> explain_factors{"development_level", "vehtype_L1"};

  static RunConfig from(const KeyValueConfig& kv) {
    RunConfig rc;
    rc.seed = static_cast<std::uint64_t>(kv.get("seed", static_cast<std::int64_t>(rc.seed)));
    rc.scenario = kv.get("synth.scenario", rc.scenario);
    if (rc.scenario != "interaction" && rc.scenario != "basic") {
      throw UsageError("synth.scenario must be 'interaction' or 'basic'");
    }
    rc.basic_tracts = kv.get("synth.tracts", rc.basic_tracts);
    rc.tracts_per_group = kv.get("synth.tracts_per_group", rc.tracts_per_group);
    rc.days = kv.get("synth.days", rc.days);
    rc.segments_per_tract = kv.get("synth.segments_per_tract", rc.segments_per_tract);
    rc.speed_noise = kv.get("synth.speed_noise", rc.speed_noise);
    rc.volume_noise = kv.get("synth.volume_noise", rc.volume_noise);

    rc.species = kv.get("species", rc.species);
    const std::string labels = kv.get("fleets", std::string("new,old"));
    std::stringstream ss(labels);
    std::string label;
    while (std::getline(ss, label, ',')) {
      if (label.empty()) continue;
      const bool is_old = label == "old";
      const std::string def = is_old ? "LDV/le2000:1" : "LDV/2018:1";
      if (label != "new" && label != "old" && !kv.has("fleet." + label)) {
        throw UsageError("fleet '" + label + "' has no fleet." + label + " entry");
      }
      FleetConfig fc;
      fc.mix = parse_fleet_mix(label, kv.get("fleet." + label, def));
      fc.indicator = kv.get("fleet." + label + ".indicator", is_old ? 1.0 : 0.0);
      rc.fleets.push_back(std::move(fc));
    }
    if (rc.fleets.empty()) throw UsageError("no fleets configured");
    rc.utc_offset_hours = kv.get("utc_offset", rc.utc_offset_hours);
    rc.capacity_bin_width = kv.get("capacity_bin_width", rc.capacity_bin_width);

    rc.train_fraction = kv.get("split.train_fraction", rc.train_fraction);
    rc.mape_floor = kv.get("mape_floor", rc.mape_floor);
    rc.gbt.n_trees = kv.get("gbt.n_trees", rc.gbt.n_trees);
    rc.gbt.max_depth = kv.get("gbt.max_depth", rc.gbt.max_depth);
    rc.gbt.learning_rate = kv.get("gbt.learning_rate", rc.gbt.learning_rate);
    rc.gbt.l2_leaf_penalty = kv.get("gbt.l2_leaf_penalty", rc.gbt.l2_leaf_penalty);
    rc.gbt.split_gain_threshold = kv.get("gbt.split_gain_threshold", rc.gbt.split_gain_threshold);
    rc.gbt.min_child_cover = kv.get("gbt.min_child_cover", rc.gbt.min_child_cover);
    rc.gbt.histogram_bins = kv.get("gbt.histogram_bins", rc.gbt.histogram_bins);
    rc.gbt.subsample = kv.get("gbt.subsample", rc.gbt.subsample);
    rc.gbt.seed = rc.seed;
    rc.gbt.validate();
    rc.forest.n_trees = kv.get("forest.n_trees", rc.forest.n_trees);
    rc.forest.max_depth = kv.get("forest.max_depth", 12);
    rc.forest.row_fraction = kv.get("forest.row_fraction", rc.forest.row_fraction);
    rc.forest.min_child_cover = kv.get("forest.min_child_cover", 2.0);
    rc.forest.seed = rc.seed;

    rc.explain_max_instances =
        static_cast<std::size_t>(kv.get("explain.max_instances", static_cast<std::int64_t>(rc.explain_max_instances)));
    const std::string factors = kv.get("explain.factors", std::string("development_level,vehtype_L1"));
    rc.explain_factors.clear();
    std::stringstream fs(factors);
    std::string f;
    while (std::getline(fs, f, ',')) {
      if (!f.empty()) rc.explain_factors.push_back(f);
    }
    return rc;
  }
};

}  // namespace emfd
