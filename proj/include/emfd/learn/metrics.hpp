#pragma once

#include <cmath>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "emfd/csv.hpp"
#include "emfd/error.hpp"

namespace emfd::learn {

struct Metrics {
  double r2 = 0.0;
  double mae = 0.0;   // g/veh/mile
  double rmse = 0.0;  // g/veh/mile
  double mape = 0.0;  // percent
};

inline constexpr double kDefaultMapeFloor = 1.0;

/// R^2, MAE, RMSE and MAPE. MAPE averages only rows with |y| >= mape_floor.
inline Metrics evaluate(std::span<const double> y, std::span<const double> yhat,
                        double mape_floor = kDefaultMapeFloor) {
  if (y.size() != yhat.size()) throw InputError("evaluate: target and prediction lengths differ");
  if (y.size() < 2) throw InputError("evaluate: need at least 2 rows");
  const double n = static_cast<double>(y.size());
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= n;
  double ss_res = 0.0, ss_tot = 0.0, abs_sum = 0.0, pct_sum = 0.0;
  std::size_t pct_rows = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - yhat[i];
    ss_res += e * e;
    ss_tot += (y[i] - mean) * (y[i] - mean);
    abs_sum += std::abs(e);
    if (std::abs(y[i]) >= mape_floor) {
      pct_sum += std::abs(e) / std::abs(y[i]);
      ++pct_rows;
    }
  }
  if (ss_tot == 0.0) throw NumericError("evaluate: R^2 undefined for constant targets");
  if (pct_rows == 0) throw NumericError("evaluate: MAPE undefined, every target is below the floor");
  Metrics m;
  m.r2 = 1.0 - ss_res / ss_tot;
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(ss_res / n);
  m.mape = 100.0 * pct_sum / static_cast<double>(pct_rows);
  return m;
}

/// Reads a single-column prediction file (header `prediction`, or any single
/// column). Row order is the alignment contract.
inline std::vector<double> read_predictions(std::istream& in) {
  if (!in) throw InputError("prediction stream is not readable");
  csv::Reader reader(in);
  csv::Header h(reader.read_header());
  std::size_t col = 0;
  if (auto c = h.find("prediction")) {
    col = *c;
  } else if (h.size() != 1) {
    throw InputError("prediction file needs a 'prediction' column");
  }
  std::vector<double> out;
  csv::Row row;
  while (reader.next(row)) {
    if (csv::is_blank(row)) continue;
    if (row.size() != h.size()) throw InputError("prediction file line " + std::to_string(reader.record_line()) + ": column count");
    auto v = csv::parse_double(row[col]);
    if (!v || !std::isfinite(*v)) {
      throw InputError("prediction file line " + std::to_string(reader.record_line()) + ": bad value");
    }
    out.push_back(*v);
  }
  return out;
}

inline Metrics evaluate_external(std::istream& predictions, std::span<const double> test_targets,
                                 double mape_floor = kDefaultMapeFloor) {
  const auto yhat = read_predictions(predictions);
  if (yhat.size() != test_targets.size()) {
    throw InputError("external predictions have " + std::to_string(yhat.size()) + " rows, test set has " +
                     std::to_string(test_targets.size()));
  }
  return evaluate(test_targets, yhat, mape_floor);
}

inline void write_predictions(std::ostream& out, std::span<const double> yhat) {
  out << "prediction\n";
  for (double v : yhat) out << csv::format_double(v) << '\n';
}

struct NamedMetrics {
  std::string model;
  Metrics metrics;
};

inline void write_metrics_table(std::ostream& out, std::span<const NamedMetrics> rows) {
  out << "model,r2,mae_g_per_veh_mi,rmse_g_per_veh_mi,mape_pct\n";
  for (const auto& r : rows) {
    csv::write_row(out, {r.model, csv::format_double(r.metrics.r2), csv::format_double(r.metrics.mae),
                         csv::format_double(r.metrics.rmse), csv::format_double(r.metrics.mape)});
  }
}

}  // namespace emfd::learn
