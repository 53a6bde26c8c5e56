// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ddr/heads.hpp"
#include "ddr/inference.hpp"
#include "ddr/sampler.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ddr {

double mean_pinball(double tau, std::span<const double> pred, std::span<const double> y);
double mae(std::span<const double> pred, std::span<const double> y);
double mse(std::span<const double> pred, std::span<const double> y);

struct QsScore {
  double total = 0.0;
  std::array<double, 9> per_decile{};
};

// Σ over the nine deciles of the mean pinball loss.
QsScore qs_score(const QuantilePredictor& predictor, const Tensor2& x, std::span<const double> y);
// Same from precomputed predictions, one column per decile.
QsScore qs_score(const Tensor2& decile_predictions, std::span<const double> y);

// 101 evenly spaced levels from 0.01 to 0.99.
std::vector<double> crossing_grid(std::size_t points = 101);
// Fraction of adjacent (τ_i, τ_{i+1}, x) triples with Q(τ_{i+1}, x) < Q(τ_i, x).
double crossing_rate(const QuantilePredictor& predictor, const Tensor2& x,
                     std::span<const double> grid);
double crossing_rate(const Tensor2& predictions);

// Fraction of rows with y ≤ Q̂(τ, x), per level.
std::vector<double> coverage(const QuantilePredictor& predictor, const Tensor2& x,
                             std::span<const double> y, std::span<const double> taus);

// Exact conditional quantile in standardized units for one standardized row.
using OracleFn = std::function<double(double tau, std::span<const double> x_row)>;

struct OracleGap {
  std::array<double, 9> per_decile{};  // mean |Q̂ − Q*|
  double mean = 0.0;
  double oracle_qs = 0.0;

  friend bool operator==(const OracleGap&, const OracleGap&) = default;
};

OracleGap oracle_gap(const QuantilePredictor& predictor, const Tensor2& x,
                     std::span<const double> y, const OracleFn& oracle);

struct EvalOptions {
  std::size_t crossing_points = 101;
  std::size_t mean_nodes = 99;
  std::vector<double> coverage_levels{kDeciles.begin(), kDeciles.end()};
  bool crossing = true;
  bool mean = true;
};

// All figures are in standardized target units.
struct EvalReport {
  std::size_t rows = 0;
  double qs = 0.0;
  std::array<double, 9> per_decile{};
  double mae = 0.0;  // of the median prediction
  double mse = 0.0;  // of the mean prediction
  std::optional<double> crossing_rate;
  std::optional<double> recover_q;
  std::optional<double> recover_f;
  std::vector<std::pair<double, double>> coverage;  // (nominal, empirical)
  std::optional<OracleGap> oracle;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// `heads`, when it has a CDF, adds the mean recover errors on the decile grid.
EvalReport evaluate(const QuantilePredictor& predictor, const DistributionHeads* heads,
                    const Tensor2& x, std::span<const double> y, const EvalOptions& options = {},
                    const OracleFn* oracle = nullptr);

nlohmann::json to_json(const EvalReport& report);
std::string csv_header(const EvalReport& report);
std::string csv_row(const EvalReport& report);

// Q-direct versus dual blend on held-out rows; returns the mode with the lower q_s.
InferenceMode select_inference_mode(const DdrModel& model, const Tensor2& x,
                                    std::span<const double> y, double alpha);

}  // namespace ddr
