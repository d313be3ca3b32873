#pragma once

// Synthetic scenarios with known ground truth: Greenshields tracts, a
// speed-dependent emission curve per fleet, and location factors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "emfd/emissions.hpp"
#include "emfd/error.hpp"
#include "emfd/ingest.hpp"
#include "emfd/learn/dataset.hpp"
#include "emfd/timeutil.hpp"

namespace emfd::synth {

/// rate(v) = alpha + beta / v + gamma * v^2, in g/mile.
struct EmissionCurve {
  double alpha = 100.0;
  double beta = 4000.0;
  double gamma = 0.016;

  EmissionCurve scaled(double s) const { return {alpha * s, beta * s, gamma * s}; }
};

inline double ground_truth_rate(double speed_mph, const EmissionCurve& c) {
  if (!(speed_mph > 0.0)) throw NumericError("ground_truth_rate needs a positive speed");
  return c.alpha + c.beta / speed_mph + c.gamma * speed_mph * speed_mph;
}

/// Greenshields speed v_f (1 - k / k_j).
inline double greenshields_speed(double density, double free_flow_speed, double jam_density) {
  return free_flow_speed * (1.0 - density / jam_density);
}

struct FleetSpec {
  std::string label;
  std::string vehicle_type;
  std::string vintage_group;
  double indicator = 0.0;
  EmissionCurve curve;
};

/// The two bounding light-duty fleets: vintage 2018 (indicator 0) and vintage
/// 2000-and-older (indicator 1, every curve parameter scaled by `old_scale`).
inline std::vector<FleetSpec> bounding_fleets(const EmissionCurve& newer = {}, double old_scale = 1.3) {
  return {{"new", "LDV", "2018", 0.0, newer}, {"old", "LDV", "le2000", 1.0, newer.scaled(old_scale)}};
}

struct TractSpec {
  std::string tract_id;
  double free_flow_speed = 60.0;  // mph
  double jam_density = 120.0;     // veh/lane/mile
  int segments = 5;
  double segment_length_mi = 0.5;
  int lanes = 2;
  double demand_scale = 1.0;
  std::vector<double> factor_values;  // aligned with ScenarioConfig::factor_names
};

struct ScenarioConfig {
  std::vector<std::string> factor_names;
  std::vector<TractSpec> tracts;
  std::vector<double> demand_profile;  // density per bin, before demand_scale
  Timestamp start = std::chrono::sys_days{std::chrono::year{2019} / 9 / 3};
  std::vector<FleetSpec> fleets = bounding_fleets();
  std::vector<double> speed_bin_centers;  // empty: 2.5, 7.5, ..., 72.5
  /// Adds every noiseless segment speed as a bin center, so table lookups hit
  /// knots and reproduce the curve exactly.
  bool exact_speed_knots = true;
  double speed_noise = 0.0;   // relative Gaussian sigma
  double volume_noise = 0.0;  // relative Gaussian sigma
  double probe_share = 0.05;
  std::uint64_t seed = 1;
  std::string species = "CO2";
  std::optional<double> divergence_density;
  std::string interaction_description;
};

struct TractTruth {
  std::string tract_id;
  double free_flow_speed = 0.0;
  double jam_density = 0.0;
  double capacity = 0.0;          // v_f k_j / 4
  double critical_density = 0.0;  // k_j / 2
};

struct BinTruth {
  std::string tract_id;
  Timestamp bin_start;
  double density = 0.0;
  double flow = 0.0;
  double speed = 0.0;
  std::vector<double> rates;  // per fleet, in ScenarioConfig::fleets order
};

struct GroundTruth {
  std::vector<std::string> fleet_labels;
  std::vector<TractTruth> tracts;
  std::vector<BinTruth> bins;  // (tract, bin) order
  std::optional<double> divergence_density;
  std::string interaction_description;
};

struct Scenario {
  std::vector<SegmentRecord> records;  // (tract, bin, segment) order
  EmissionRateTable table;
  learn::LocationFactors factors;
  std::vector<FleetSpec> fleets;
  GroundTruth truth;

  std::vector<FleetMix> fleet_mixes() const {
    std::vector<FleetMix> out;
    for (const auto& f : fleets) out.emplace_back(f.label, std::vector<FleetShare>{{f.vehicle_type, f.vintage_group, 1.0}});
    return out;
  }
};

inline std::vector<double> default_speed_bin_centers() {
  std::vector<double> c;
  for (int i = 0; i < 15; ++i) c.push_back(2.5 + 5.0 * i);
  return c;
}

/// Weekday-like density profile: low night-time base with a morning and a
/// stronger evening peak.
inline std::vector<double> daily_profile(int bins = 96, double base = 4.0, double am_peak = 40.0,
                                         double pm_peak = 66.0) {
  std::vector<double> k(static_cast<std::size_t>(bins));
  for (int b = 0; b < bins; ++b) {
    const double h = 24.0 * (b + 0.5) / bins;
    const double am = (h - 8.0) / 1.0, pm = (h - 17.5) / 1.2;
    k[static_cast<std::size_t>(b)] = base + am_peak * std::exp(-am * am) + pm_peak * std::exp(-pm * pm);
  }
  return k;
}

inline Scenario generate_scenario(const ScenarioConfig& cfg) {
  if (cfg.tracts.empty()) throw UsageError("scenario has no tracts");
  if (cfg.demand_profile.empty()) throw UsageError("scenario has an empty demand profile");
  if (cfg.fleets.empty()) throw UsageError("scenario has no fleets");
  if (cfg.speed_noise < 0.0 || cfg.volume_noise < 0.0) throw UsageError("noise levels must be >= 0");
  for (const auto& f : cfg.fleets) {
    if (f.curve.beta < 0.0) throw UsageError("emission curve beta must be >= 0");
  }

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::array<RoadType, 4> road_cycle = {RoadType::arterial, RoadType::local, RoadType::freeway,
                                              RoadType::ramp};

  Scenario sc{{}, EmissionRateTable("CO2", {1.0}, {}), {}, cfg.fleets, {}};
  sc.factors.names = cfg.factor_names;
  sc.truth.divergence_density = cfg.divergence_density;
  sc.truth.interaction_description = cfg.interaction_description;
  for (const auto& f : cfg.fleets) sc.truth.fleet_labels.push_back(f.label);

  std::vector<double> knots = cfg.speed_bin_centers.empty() ? default_speed_bin_centers() : cfg.speed_bin_centers;

  for (const auto& tract : cfg.tracts) {
    if (!(tract.free_flow_speed > 0.0) || !(tract.jam_density > 0.0)) {
      throw UsageError("tract " + tract.tract_id + ": v_f and k_j must be positive");
    }
    if (tract.free_flow_speed > kMaxSpeedMph) throw UsageError("tract " + tract.tract_id + ": v_f above 120 mph");
    if (tract.segments < 1 || tract.lanes < 1 || !(tract.segment_length_mi > 0.0)) {
      throw UsageError("tract " + tract.tract_id + ": bad segment geometry");
    }
    if (tract.factor_values.size() != cfg.factor_names.size()) {
      throw UsageError("tract " + tract.tract_id + ": factor values do not match factor names");
    }
    if (!sc.factors.by_tract.emplace(tract.tract_id, tract.factor_values).second) {
      throw UsageError("duplicate tract id " + tract.tract_id);
    }
    sc.truth.tracts.push_back({tract.tract_id, tract.free_flow_speed, tract.jam_density,
                               tract.free_flow_speed * tract.jam_density / 4.0, tract.jam_density / 2.0});

    for (std::size_t b = 0; b < cfg.demand_profile.size(); ++b) {
      const double k = cfg.demand_profile[b] * tract.demand_scale;
      if (!(k >= 0.0)) throw UsageError("negative density requested");
      if (k >= tract.jam_density) {
        throw UsageError("tract " + tract.tract_id + ": density " + std::to_string(k) + " at or above jam density " +
                         std::to_string(tract.jam_density));
      }
      const double v = greenshields_speed(k, tract.free_flow_speed, tract.jam_density);
      const double q = k * v;
      const Timestamp bin = cfg.start + BinDuration{static_cast<std::int64_t>(b)};
      BinTruth truth{tract.tract_id, bin, k, q, v, {}};
      for (const auto& f : cfg.fleets) truth.rates.push_back(ground_truth_rate(v, f.curve));
      sc.truth.bins.push_back(std::move(truth));
      if (cfg.exact_speed_knots) knots.push_back(v);

      for (int s = 0; s < tract.segments; ++s) {
        SegmentRecord rec;
        char id[32];
        std::snprintf(id, sizeof(id), "-S%03d", s);
        rec.segment_id = tract.tract_id + id;
        rec.tract_id = tract.tract_id;
        rec.bin_start = bin;
        rec.road_type = road_cycle[static_cast<std::size_t>(s) % road_cycle.size()];
        rec.lanes = tract.lanes + s % 2;
        rec.length_mi = tract.segment_length_mi * (1.0 + 0.25 * (s % 3));
        double speed = v;
        double volume = q * rec.lanes * kBinHours;
        // Draw both variates unconditionally so streams stay aligned across noise levels.
        const double eps_v = normal(rng), eps_q = normal(rng);
        if (cfg.speed_noise > 0.0) speed = std::clamp(speed * (1.0 + cfg.speed_noise * eps_v), 0.5, kMaxSpeedMph);
        if (cfg.volume_noise > 0.0) volume = std::max(0.0, volume * (1.0 + cfg.volume_noise * eps_q));
        if (k == 0.0) volume = 0.0;
        rec.mean_speed_mph = speed;
        rec.volume_veh = volume;
        rec.probe_count = static_cast<std::int64_t>(std::floor(volume * cfg.probe_share));
        sc.records.push_back(std::move(rec));
      }
    }
  }

  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
  std::map<RateKey, std::vector<double>> rates;
  for (const auto& f : cfg.fleets) {
    for (RoadType road : kAllRoadTypes) {
      auto& curve = rates[{f.vehicle_type, f.vintage_group, road}];
      if (!curve.empty()) throw UsageError("two fleets share the key " + f.vehicle_type + "/" + f.vintage_group);
      for (double c : knots) curve.push_back(ground_truth_rate(c, f.curve));
    }
  }
  sc.table = EmissionRateTable(cfg.species, std::move(knots), std::move(rates));
  return sc;
}

inline constexpr std::string_view kDevelopmentLevel = "development_level";

struct InteractionScenarioConfig {
  int tracts_per_group = 12;
  int days = 2;
  int segments_per_tract = 5;
  double free_flow_speed = 60.0;
  double jam_density_low_development = 100.0;
  double jam_density_high_development = 160.0;
  double divergence_density = 20.0;
  /// Assign development levels to the opposite tract group.
  bool swap_groups = false;
  double speed_noise = 0.0;
  double volume_noise = 0.0;
  EmissionCurve newer_fleet_curve{};
  double older_fleet_scale = 1.3;
  std::uint64_t seed = 7;
};

/// Two tract groups whose emission-vs-density curves coincide at low density
/// and separate beyond `divergence_density`: high development level gets a
/// larger jam density, so speed decays more slowly under load. Other factors
/// are independent noise.
inline ScenarioConfig make_interaction_scenario(const InteractionScenarioConfig& ic) {
  if (ic.tracts_per_group < 1 || ic.days < 1) throw UsageError("interaction scenario needs tracts and days");
  if (!(ic.jam_density_high_development > ic.jam_density_low_development)) {
    throw UsageError("high-development jam density must exceed the low-development one");
  }
  std::mt19937_64 rng(ic.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  ScenarioConfig cfg;
  cfg.seed = ic.seed;
  cfg.speed_noise = ic.speed_noise;
  cfg.volume_noise = ic.volume_noise;
  cfg.fleets = bounding_fleets(ic.newer_fleet_curve, ic.older_fleet_scale);
  cfg.factor_names = {std::string(kDevelopmentLevel), "intersection_density", "population_density", "job_density"};
  cfg.divergence_density = ic.divergence_density;
  cfg.interaction_description =
      "emission rate depends on density through Greenshields speed; jam density rises with development_level, "
      "older fleet scales rates by " + csv::format_double(ic.older_fleet_scale) +
      "; groups diverge beyond density " + csv::format_double(ic.divergence_density);

  const auto one_day = daily_profile();
  for (int d = 0; d < ic.days; ++d) {
    const double day_scale = 0.85 + 0.3 * unit(rng);
    for (double k : one_day) cfg.demand_profile.push_back(k * day_scale);
  }

  const double span = ic.jam_density_high_development - ic.jam_density_low_development;
  for (int g = 0; g < 2; ++g) {
    const bool high = g == 1;
    for (int t = 0; t < ic.tracts_per_group; ++t) {
      TractSpec spec;
      char id[32];
      std::snprintf(id, sizeof(id), "T%c%03d", high ? 'H' : 'L', t);
      spec.tract_id = id;
      spec.free_flow_speed = ic.free_flow_speed;
      spec.segments = ic.segments_per_tract;
      const double level = high ? 0.6 + 0.4 * unit(rng) : 0.4 * unit(rng);
      spec.jam_density = ic.jam_density_low_development + span * level;
      spec.demand_scale = 0.9 + 0.2 * unit(rng);
      spec.lanes = 1 + static_cast<int>(3.0 * unit(rng));
      spec.segment_length_mi = 0.2 + 0.6 * unit(rng);
      const double reported_level = ic.swap_groups ? 1.0 - level : level;
      spec.factor_values = {reported_level, unit(rng), unit(rng), unit(rng)};
      cfg.tracts.push_back(std::move(spec));
    }
  }
  return cfg;
}

/// Three Greenshields tracts over one day; T2 has the lowest jam density and
/// hence the lowest capacity.
inline ScenarioConfig basic_scenario(int tracts = 3, int segments = 5, std::uint64_t seed = 1) {
  if (tracts < 1) throw UsageError("basic scenario needs at least one tract");
  ScenarioConfig cfg;
  cfg.seed = seed;
  cfg.factor_names = {std::string(kDevelopmentLevel), "intersection_density", "population_density"};
  cfg.demand_profile = daily_profile();
  const double jam[3] = {120.0, 80.0, 150.0};
  const double vf[3] = {60.0, 60.0, 50.0};
  for (int t = 0; t < tracts; ++t) {
    TractSpec spec;
    spec.tract_id = "T" + std::to_string(t + 1);
    spec.free_flow_speed = vf[t % 3];
    spec.jam_density = jam[t % 3];
    spec.segments = segments;
    spec.lanes = 2;
    spec.segment_length_mi = 0.4;
    spec.demand_scale = 1.0 + 0.05 * (t / 3);
    spec.factor_values = {0.25 * (1 + t % 3), 40.0 + 10.0 * t, 5000.0 + 500.0 * t};
    cfg.tracts.push_back(std::move(spec));
  }
  return cfg;
}

/// Direct samples of the ground-truth rate as a function of density,
/// development level and fleet, with relative Gaussian noise. Columns:
/// density, development_level, intersection_density, population_density,
/// job_density, vehtype_L1.
inline learn::Dataset make_learning_dataset(std::size_t n_rows, double relative_noise, std::uint64_t seed,
                                            const InteractionScenarioConfig& shape = {}) {
  learn::Dataset ds{learn::FeatureSchema({std::string(learn::kDensityFeature), std::string(kDevelopmentLevel),
                                          "intersection_density", "population_density", "job_density",
                                          std::string(learn::kFleetFeature)})};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double span = shape.jam_density_high_development - shape.jam_density_low_development;
  std::vector<double> x(6);
  for (std::size_t i = 0; i < n_rows; ++i) {
    const double level = unit(rng);
    const double jam = shape.jam_density_low_development + span * level;
    const double k = 0.8 * jam * unit(rng);
    const double fleet = unit(rng) < 0.5 ? 0.0 : 1.0;
    const double v = greenshields_speed(k, shape.free_flow_speed, jam);
    const EmissionCurve curve = fleet > 0.5 ? shape.newer_fleet_curve.scaled(shape.older_fleet_scale)
                                            : shape.newer_fleet_curve;
    const double rate = ground_truth_rate(v, curve) * (1.0 + relative_noise * normal(rng));
    x = {k, level, unit(rng), unit(rng), unit(rng), fleet};
    ds.add_row(x, rate);
  }
  return ds;
}

inline nlohmann::ordered_json ground_truth_to_json(const GroundTruth& gt) {
  nlohmann::ordered_json j;
  j["fleets"] = gt.fleet_labels;
  j["tracts"] = nlohmann::ordered_json::array();
  for (const auto& t : gt.tracts) {
    j["tracts"].push_back({{"tract_id", t.tract_id},
                           {"free_flow_speed", t.free_flow_speed},
                           {"jam_density", t.jam_density},
                           {"capacity", t.capacity},
                           {"critical_density", t.critical_density}});
  }
  j["bins"] = nlohmann::ordered_json::array();
  for (const auto& b : gt.bins) {
    j["bins"].push_back({{"tract_id", b.tract_id},
                         {"bin_start", format_rfc3339(b.bin_start)},
                         {"density", b.density},
                         {"flow", b.flow},
                         {"speed", b.speed},
                         {"rates", b.rates}});
  }
  if (gt.divergence_density) j["divergence_density"] = *gt.divergence_density;
  if (!gt.interaction_description.empty()) j["interaction"] = gt.interaction_description;
  return j;
}

inline GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  try {
    GroundTruth gt;
    gt.fleet_labels = j.at("fleets").get<std::vector<std::string>>();
    for (const auto& t : j.at("tracts")) {
      gt.tracts.push_back({t.at("tract_id").get<std::string>(), t.at("free_flow_speed").get<double>(),
                           t.at("jam_density").get<double>(), t.at("capacity").get<double>(),
                           t.at("critical_density").get<double>()});
    }
    for (const auto& b : j.at("bins")) {
      auto ts = parse_rfc3339(b.at("bin_start").get<std::string>());
      if (!ts) throw InputError("ground truth: bad bin_start");
      gt.bins.push_back({b.at("tract_id").get<std::string>(), *ts, b.at("density").get<double>(),
                         b.at("flow").get<double>(), b.at("speed").get<double>(),
                         b.at("rates").get<std::vector<double>>()});
    }
    if (j.contains("divergence_density")) gt.divergence_density = j.at("divergence_density").get<double>();
    gt.interaction_description = j.value("interaction", std::string());
    return gt;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed ground truth JSON: ") + e.what());
  }
}

}  // namespace emfd::synth
