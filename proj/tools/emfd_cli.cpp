// emfd: command-line driver for the synth -> aggregate -> emfd -> train -> explain pipeline.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "emfd/emfd.hpp"
#include "provenance.hpp"

namespace fs = std::filesystem;
using namespace emfd;

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::int64_t> seed;
  std::string out_dir = ".";
};

struct Context {
  KeyValueConfig kv;
  RunConfig run;
  fs::path out;
};

Context load_context(const CommonOptions& opts) {
  Context ctx;
  if (!opts.config_path.empty()) {
    std::ifstream in(opts.config_path);
    if (!in) throw InputError("cannot open config " + opts.config_path);
    ctx.kv = KeyValueConfig::parse(in);
  }
  if (opts.seed) ctx.kv.set("seed", std::to_string(*opts.seed));
  ctx.run = RunConfig::from(ctx.kv);
  ctx.out = opts.out_dir;
  return ctx;
}

std::ifstream open_input(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError("cannot open input " + p.string());
  return in;
}

fs::path or_default(const std::string& given, const fs::path& fallback) {
  return given.empty() ? fallback : fs::path(given);
}

void run_synth(const Context& ctx) {
  const RunConfig& rc = ctx.run;
  synth::ScenarioConfig cfg;
  if (rc.scenario == "basic") {
    cfg = synth::basic_scenario(rc.basic_tracts, rc.segments_per_tract, rc.seed);
  } else {
    synth::InteractionScenarioConfig ic;
    ic.tracts_per_group = rc.tracts_per_group;
    ic.days = rc.days;
    ic.segments_per_tract = rc.segments_per_tract;
    ic.seed = rc.seed;
    cfg = synth::make_interaction_scenario(ic);
  }
  cfg.speed_noise = rc.speed_noise;
  cfg.volume_noise = rc.volume_noise;
  cfg.species = rc.species;
  const synth::Scenario sc = synth::generate_scenario(cfg);

  tools::Provenance prov("synth", ctx.kv.canonical());
  tools::OutputSet outputs(ctx.out);
  auto& seg = outputs.open("segments.csv");
  seg << prov.comment_line() << '\n';
  write_segment_records(seg, sc.records);
  auto& rates = outputs.open("rates.csv");
  rates << prov.comment_line() << '\n';
  write_rate_table(rates, sc.table);
  auto& factors = outputs.open("factors.csv");
  factors << prov.comment_line() << '\n';
  learn::write_location_factors(factors, sc.factors);
  auto gt = synth::ground_truth_to_json(sc.truth);
  gt["provenance"] = prov.to_json();
  outputs.open("ground_truth.json") << gt.dump(1) << '\n';
  outputs.commit();
}

struct AggregateOptions {
  std::string segments;
  std::string rates;
  std::optional<int> local_hour;
  std::optional<double> utc_offset;
};

void run_aggregate(const Context& ctx, const AggregateOptions& opts) {
  const fs::path seg_path = or_default(opts.segments, ctx.out / "segments.csv");
  const fs::path rate_path = or_default(opts.rates, ctx.out / "rates.csv");
  tools::Provenance prov("aggregate", ctx.kv.canonical());
  prov.add_input(seg_path);
  prov.add_input(rate_path);

  auto seg_in = open_input(seg_path);
  ParsedSegments parsed = parse_segment_records(seg_in);
  auto rate_in = open_input(rate_path);
  const EmissionRateTable table = read_rate_table(rate_in, ctx.run.species);

  std::vector<NetworkState> network = aggregate_network(parsed.records);
  std::vector<std::vector<EmissionState>> per_fleet;
  for (const auto& fleet : ctx.run.fleets) per_fleet.push_back(aggregate_emissions(parsed.records, table, fleet.mix));

  if (opts.local_hour) {
    if (*opts.local_hour < 0 || *opts.local_hour > 23) throw UsageError("--local-hour must lie in [0,23]");
    const double offset = opts.utc_offset.value_or(ctx.run.utc_offset_hours);
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < network.size(); ++i) {
      if (local_hour(network[i].bin_start, offset) == *opts.local_hour) keep.push_back(i);
    }
    auto filter = [&](auto& v) {
      std::remove_reference_t<decltype(v)> kept;
      for (std::size_t i : keep) kept.push_back(v[i]);
      v = std::move(kept);
    };
    filter(network);
    for (auto& e : per_fleet) filter(e);
  }

  tools::OutputSet outputs(ctx.out);
  auto& net = outputs.open("network_states.csv");
  net << prov.comment_line() << '\n';
  write_network_states(net, network);
  for (std::size_t f = 0; f < ctx.run.fleets.size(); ++f) {
    auto& out = outputs.open("emissions_" + ctx.run.fleets[f].mix.label() + ".csv");
    out << prov.comment_line() << '\n';
    write_emission_states(out, network, per_fleet[f]);
  }
  auto& rej = outputs.open("rejects.jsonl");
  rej << nlohmann::ordered_json{{"provenance", prov.to_json()}}.dump() << '\n';
  write_reject_report(rej, parsed.report);
  nlohmann::ordered_json summary{{"rows_read", parsed.report.rows_read},
                                 {"rows_accepted", parsed.report.rows_accepted},
                                 {"rows_rejected", parsed.report.rejects.size()},
                                 {"provenance", prov.to_json()}};
  outputs.open("validation.json") << summary.dump(1) << '\n';
  outputs.commit();
}

struct EmfdOptions {
  std::string tables;
  std::string factors;
};

void run_emfd(const Context& ctx, const EmfdOptions& opts) {
  const fs::path tables = or_default(opts.tables, ctx.out);
  const fs::path net_path = tables / "network_states.csv";
  const fs::path factor_path = or_default(opts.factors, ctx.out / "factors.csv");
  tools::Provenance prov("emfd", ctx.kv.canonical());
  prov.add_input(net_path);
  prov.add_input(factor_path);

  auto net_in = open_input(net_path);
  const std::vector<NetworkState> network = read_network_states(net_in);
  std::vector<std::vector<EmissionState>> per_fleet;
  for (const auto& fleet : ctx.run.fleets) {
    const fs::path p = tables / ("emissions_" + fleet.mix.label() + ".csv");
    prov.add_input(p);
    auto in = open_input(p);
    per_fleet.push_back(read_emission_states(in));
  }
  auto factor_in = open_input(factor_path);
  const learn::LocationFactors factors = learn::read_location_factors(factor_in);

  // Network states are grouped by tract in file order.
  std::map<std::string, std::vector<std::size_t>> by_tract;
  for (std::size_t i = 0; i < network.size(); ++i) by_tract[network[i].tract_id].push_back(i);

  tools::OutputSet outputs(ctx.out);
  auto& mfd = outputs.open("mfd_points.csv");
  mfd << prov.comment_line() << "\ntract_id,bin_start,density,flow\n";
  auto& emfd_out = outputs.open("emfd_points.csv");
  emfd_out << prov.comment_line() << "\ntract_id,fleet,bin_start,density,rate_g_per_veh_mi\n";
  auto& cap = outputs.open("capacity.csv");
  cap << prov.comment_line() << "\ntract_id,points,capacity_flow,critical_density,status\n";

  for (const auto& [tract, idx] : by_tract) {
    std::vector<NetworkState> states;
    for (std::size_t i : idx) states.push_back(network[i]);
    const MfdPointSet points = build_mfd(states);
    for (const auto& p : points.points) {
      csv::write_row(mfd, {tract, format_rfc3339(p.bin_start), csv::format_double(p.density), csv::format_double(p.flow)});
    }
    if (points.points.size() >= kMinCapacityPoints) {
      const CapacityEstimate c = estimate_capacity(points, ctx.run.capacity_bin_width);
      csv::write_row(cap, {tract, std::to_string(points.points.size()), csv::format_double(c.capacity_flow),
                           csv::format_double(c.critical_density), "ok"});
    } else {
      csv::write_row(cap, {tract, std::to_string(points.points.size()), "", "", "too_few_points"});
    }
    for (std::size_t f = 0; f < ctx.run.fleets.size(); ++f) {
      if (per_fleet[f].size() != network.size()) throw InputError("emission table not aligned with network states");
      std::vector<EmissionState> es;
      for (std::size_t i : idx) es.push_back(per_fleet[f][i]);
      const EmfdPointSet e = build_emfd(states, es, ctx.run.fleets[f].mix.label());
      for (const auto& p : e.points) {
        csv::write_row(emfd_out, {tract, e.fleet_label, format_rfc3339(p.bin_start), csv::format_double(p.density),
                                  csv::format_double(p.rate)});
      }
    }
  }

  std::vector<learn::FleetEmissions> fleets;
  for (std::size_t f = 0; f < ctx.run.fleets.size(); ++f) fleets.push_back({ctx.run.fleets[f].indicator, per_fleet[f]});
  const learn::Dataset ds = learn::assemble_dataset(network, fleets, factors);
  auto& data = outputs.open("dataset.csv");
  data << prov.comment_line() << '\n';
  learn::write_dataset(data, ds);
  outputs.commit();
}

struct TrainOptions {
  std::string dataset;
  std::vector<std::string> externals;  // label=path
};

std::vector<double> predict_all(const learn::TreeEnsemble& m, const learn::Dataset& ds) {
  std::vector<double> out(ds.rows());
  for (std::size_t i = 0; i < ds.rows(); ++i) out[i] = learn::predict(m, ds.row(i));
  return out;
}

void run_train(const Context& ctx, const TrainOptions& opts) {
  const fs::path ds_path = or_default(opts.dataset, ctx.out / "dataset.csv");
  tools::Provenance prov("train", ctx.kv.canonical());
  prov.add_input(ds_path);
  auto in = open_input(ds_path);
  const learn::Dataset ds = learn::read_dataset(in);
  if (ds.rows() == 0) throw InputError("dataset " + ds_path.string() + " has no rows");
  const learn::Split split = learn::split_train_test(ds, ctx.run.train_fraction, ctx.run.seed);

  const learn::TreeEnsemble gbt = learn::train_gbt(split.train, ctx.run.gbt);
  const learn::TreeEnsemble forest = learn::train_forest(split.train, ctx.run.forest);
  const learn::TreeEnsemble baseline = learn::train_constant(split.train);

  const auto targets = split.test.targets();
  const auto p_gbt = predict_all(gbt, split.test);
  const auto p_forest = predict_all(forest, split.test);
  const auto p_base = predict_all(baseline, split.test);
  std::vector<learn::NamedMetrics> table{{"gbt", learn::evaluate(targets, p_gbt, ctx.run.mape_floor)},
                                         {"forest", learn::evaluate(targets, p_forest, ctx.run.mape_floor)},
                                         {"baseline", learn::evaluate(targets, p_base, ctx.run.mape_floor)}};
  for (const auto& spec : opts.externals) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--external expects LABEL=PATH, got '" + spec + "'");
    const fs::path p = spec.substr(eq + 1);
    prov.add_input(p);
    auto ext = open_input(p);
    table.push_back({spec.substr(0, eq), learn::evaluate_external(ext, targets, ctx.run.mape_floor)});
  }

  tools::OutputSet outputs(ctx.out);
  auto write_model = [&](const std::string& name, const learn::TreeEnsemble& m) {
    auto j = learn::to_json(m);
    j["provenance"] = prov.to_json();
    outputs.open(name) << j.dump() << '\n';
  };
  write_model("model_gbt.json", gbt);
  write_model("model_forest.json", forest);
  write_model("model_baseline.json", baseline);
  auto& train_out = outputs.open("train.csv");
  train_out << prov.comment_line() << '\n';
  learn::write_dataset(train_out, split.train);
  auto& test_out = outputs.open("test.csv");
  test_out << prov.comment_line() << '\n';
  learn::write_dataset(test_out, split.test);
  auto& pred = outputs.open("predictions_test.csv");
  pred << prov.comment_line() << "\ntarget,gbt,forest,baseline\n";
  for (std::size_t i = 0; i < targets.size(); ++i) {
    csv::write_row(pred, {csv::format_double(targets[i]), csv::format_double(p_gbt[i]),
                          csv::format_double(p_forest[i]), csv::format_double(p_base[i])});
  }
  auto& metrics = outputs.open("metrics.csv");
  metrics << prov.comment_line() << '\n';
  learn::write_metrics_table(metrics, table);
  outputs.commit();
}

struct ExplainOptions {
  std::string model;
  std::string test;
  std::optional<std::size_t> max_instances;
};

void run_explain(const Context& ctx, const ExplainOptions& opts) {
  const fs::path model_path = or_default(opts.model, ctx.out / "model_gbt.json");
  const fs::path test_path = or_default(opts.test, ctx.out / "test.csv");
  tools::Provenance prov("explain", ctx.kv.canonical());
  prov.add_input(model_path);
  prov.add_input(test_path);

  nlohmann::json mj;
  try {
    mj = nlohmann::json::parse(tools::read_file(model_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("model file is not JSON: " + std::string(e.what()));
  }
  const learn::TreeEnsemble model = learn::ensemble_from_json(mj);
  auto test_in = open_input(test_path);
  const learn::Dataset test = learn::read_dataset(test_in);
  if (test.schema().names() != model.feature_names) throw InputError("test set columns do not match the model features");
  if (test.rows() == 0) throw InputError("test set has no rows");

  const auto picked = explain::select_instances(test.rows(), opts.max_instances.value_or(ctx.run.explain_max_instances));
  const learn::Dataset rows = test.subset(picked);
  std::vector<explain::Attribution> attributions(rows.rows());
  std::vector<explain::InteractionMatrix> matrices(rows.rows());
  std::vector<double> predictions(rows.rows());
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    matrices[i] = explain::shap_interactions(model, rows.row(i), &attributions[i]);
    predictions[i] = learn::predict(model, rows.row(i));
  }
  const explain::ImportanceRanking ranking = explain::rank_by_density_interaction(matrices, rows.schema());

  tools::OutputSet outputs(ctx.out);
  auto& inst = outputs.open("explained_instances.csv");
  inst << prov.comment_line() << "\ninstance_id,test_row\n";
  for (std::size_t i = 0; i < picked.size(); ++i) inst << i << ',' << picked[i] << '\n';
  auto& attr = outputs.open("attributions.csv");
  attr << prov.comment_line() << '\n';
  explain::write_attributions(attr, rows.schema(), attributions, predictions);
  auto& inter = outputs.open("interactions.csv");
  inter << prov.comment_line() << '\n';
  explain::write_interactions(inter, rows.schema(), matrices);
  auto& rank = outputs.open("ranking.csv");
  rank << prov.comment_line() << '\n';
  explain::write_ranking(rank, ranking);
  for (const auto& factor : ctx.run.explain_factors) {
    const auto dep = explain::dependence_export(matrices, rows, factor);
    auto& out = outputs.open("dependence_" + factor + ".csv");
    out << prov.comment_line() << '\n';
    explain::write_dependence(out, dep);
  }
  outputs.commit();
}

int report(ErrorCategory category, const std::string& message) {
  nlohmann::json msg = message;
  std::cerr << "error category=" << category_name(category) << " message=" << msg.dump() << '\n';
  return exit_code(category);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emission MFD pipeline: synthetic data, aggregation, eMFD export, training and SHAP explanation"};
  app.require_subcommand(1);
  CommonOptions common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "key=value run configuration file");
    sub->add_option("--seed", common.seed, "override the configured seed");
    sub->add_option("--out", common.out_dir, "working/output directory")->capture_default_str();
  };

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic scenario with ground truth");
  add_common(synth_cmd);

  AggregateOptions agg;
  auto* agg_cmd = app.add_subcommand("aggregate", "segment records -> network and emission state tables");
  add_common(agg_cmd);
  agg_cmd->add_option("--segments", agg.segments, "segment file (default OUT/segments.csv)");
  agg_cmd->add_option("--rates", agg.rates, "rate table (default OUT/rates.csv)");
  agg_cmd->add_option("--local-hour", agg.local_hour, "only export bins starting in this local hour");
  agg_cmd->add_option("--utc-offset", agg.utc_offset, "UTC offset in hours for --local-hour");

  EmfdOptions emfd_opts;
  auto* emfd_cmd = app.add_subcommand("emfd", "MFD/eMFD point exports, capacity report and training dataset");
  add_common(emfd_cmd);
  emfd_cmd->add_option("--tables", emfd_opts.tables, "directory with aggregate outputs (default OUT)");
  emfd_cmd->add_option("--factors", emfd_opts.factors, "location factor file (default OUT/factors.csv)");

  TrainOptions train_opts;
  auto* train_cmd = app.add_subcommand("train", "split, train boosted/forest/baseline models and report metrics");
  add_common(train_cmd);
  train_cmd->add_option("--dataset", train_opts.dataset, "dataset file (default OUT/dataset.csv)");
  train_cmd->add_option("--external", train_opts.externals, "LABEL=PATH prediction file aligned with test.csv");

  ExplainOptions explain_opts;
  auto* explain_cmd = app.add_subcommand("explain", "SHAP attributions, interactions, ranking and dependence exports");
  add_common(explain_cmd);
  explain_cmd->add_option("--model", explain_opts.model, "model JSON (default OUT/model_gbt.json)");
  explain_cmd->add_option("--test", explain_opts.test, "test set (default OUT/test.csv)");
  explain_cmd->add_option("--max-instances", explain_opts.max_instances, "explain at most N evenly spaced rows");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(ErrorCategory::usage, e.what());
  }

  try {
    const Context ctx = load_context(common);
    if (synth_cmd->parsed()) run_synth(ctx);
    if (agg_cmd->parsed()) run_aggregate(ctx, agg);
    if (emfd_cmd->parsed()) run_emfd(ctx, emfd_opts);
    if (train_cmd->parsed()) run_train(ctx, train_opts);
    if (explain_cmd->parsed()) run_explain(ctx, explain_opts);
  } catch (const Error& e) {
    return report(e.category(), e.what());
  } catch (const fs::filesystem_error& e) {
    return report(ErrorCategory::input, e.what());
  } catch (const std::exception& e) {
    return report(ErrorCategory::numeric, e.what());
  }
  return 0;
}
