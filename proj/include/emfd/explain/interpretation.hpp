#pragma once

// Density-interaction importance ranking, dependence-plot exports and the
// attribution/interaction table writers.

#include <algorithm>
#include <cmath>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "emfd/csv.hpp"
#include "emfd/error.hpp"
#include "emfd/explain/tree_shap.hpp"
#include "emfd/learn/dataset.hpp"

namespace emfd::explain {

/// Evenly spaced row indices, at most `max_instances` of `n`.
inline std::vector<std::size_t> select_instances(std::size_t n, std::size_t max_instances) {
  const std::size_t count = max_instances == 0 ? n : std::min(n, max_instances);
  std::vector<std::size_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = i * n / count;
  return out;
}

struct RankedFeature {
  std::string name;
  double score = 0.0;
};

/// Features ordered by mean |M[feature][density]|, density excluded.
using ImportanceRanking = std::vector<RankedFeature>;

inline ImportanceRanking rank_by_density_interaction(std::span<const InteractionMatrix> matrices,
                                                     const learn::FeatureSchema& schema) {
  if (matrices.empty()) throw InputError("ranking needs at least one interaction matrix");
  const std::size_t F = schema.size();
  const std::size_t density = schema.density_index();
  std::vector<double> sums(F, 0.0);
  for (const auto& m : matrices) {
    if (m.size() != F) throw InputError("interaction matrix size does not match the schema");
    for (std::size_t f = 0; f < F; ++f) sums[f] += std::abs(m(f, density));
  }
  ImportanceRanking out;
  for (std::size_t f = 0; f < F; ++f) {
    if (f == density) continue;
    out.push_back({schema.names()[f], sums[f] / static_cast<double>(matrices.size())});
  }
  std::sort(out.begin(), out.end(), [](const RankedFeature& a, const RankedFeature& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.name < b.name;
  });
  return out;
}

struct DependenceRow {
  std::size_t instance_id = 0;
  double density = 0.0;
  double interaction = 0.0;  // M[factor][density]
  double factor_value = 0.0;
};

/// One row per instance pairing density with the factor's density interaction.
inline std::vector<DependenceRow> dependence_export(std::span<const InteractionMatrix> matrices,
                                                    const learn::Dataset& rows, const std::string& factor_name,
                                                    const std::string& density_name = std::string(learn::kDensityFeature)) {
  const auto& schema = rows.schema();
  auto factor = schema.index_of(factor_name);
  auto density = schema.index_of(density_name);
  if (!factor) throw UsageError("unknown factor '" + factor_name + "'");
  if (!density) throw UsageError("unknown density feature '" + density_name + "'");
  if (matrices.size() != rows.rows()) throw InputError("dependence export: matrix and row counts differ");
  std::vector<DependenceRow> out;
  out.reserve(matrices.size());
  for (std::size_t i = 0; i < matrices.size(); ++i) {
    out.push_back({i, rows.value(i, *density), matrices[i](*factor, *density), rows.value(i, *factor)});
  }
  return out;
}

inline void write_attributions(std::ostream& out, const learn::FeatureSchema& schema,
                               std::span<const Attribution> attributions, std::span<const double> predictions) {
  if (attributions.size() != predictions.size()) throw InputError("attribution export: size mismatch");
  std::vector<std::string> header = schema.names();
  header.emplace_back("base_value");
  header.emplace_back("prediction");
  csv::write_row(out, header);
  std::vector<std::string> fields(header.size());
  for (std::size_t i = 0; i < attributions.size(); ++i) {
    for (std::size_t f = 0; f < schema.size(); ++f) fields[f] = csv::format_double(attributions[i].phi[f]);
    fields[schema.size()] = csv::format_double(attributions[i].base_value);
    fields[schema.size() + 1] = csv::format_double(predictions[i]);
    csv::write_row(out, fields);
  }
}

/// Long format: instance_id,feature_i,feature_j,value.
inline void write_interactions(std::ostream& out, const learn::FeatureSchema& schema,
                               std::span<const InteractionMatrix> matrices) {
  out << "instance_id,feature_i,feature_j,value\n";
  const auto& names = schema.names();
  for (std::size_t k = 0; k < matrices.size(); ++k) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      for (std::size_t j = 0; j < names.size(); ++j) {
        csv::write_row(out, {std::to_string(k), names[i], names[j], csv::format_double(matrices[k](i, j))});
      }
    }
  }
}

inline void write_ranking(std::ostream& out, const ImportanceRanking& ranking) {
  out << "rank,feature,score\n";
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    csv::write_row(out, {std::to_string(i + 1), ranking[i].name, csv::format_double(ranking[i].score)});
  }
}

inline void write_dependence(std::ostream& out, std::span<const DependenceRow> rows) {
  out << "instance_id,density,interaction_value,factor_value\n";
  for (const auto& r : rows) {
    csv::write_row(out, {std::to_string(r.instance_id), csv::format_double(r.density),
                         csv::format_double(r.interaction), csv::format_double(r.factor_value)});
  }
}

}  // namespace emfd::explain
