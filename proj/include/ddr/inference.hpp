// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ddr/heads.hpp"
#include "ddr/network.hpp"

#include <memory>
#include <span>
#include <string_view>
#include <vector>

namespace ddr {

enum class InferenceMode { q_only, f_invert, dual };

std::string_view to_string(InferenceMode mode);
InferenceMode parse_inference_mode(std::string_view text);

// Bracket for inverting F, standardized units.
struct SearchInterval {
  double lo = -2.0;
  double hi = 2.0;
};

// [ỹ_min − range/2, ỹ_max + range/2] from the training bounds.
SearchInterval search_interval(const Standardization& stats);

struct Inversion {
  std::vector<double> value;
  // 1 where F − τ kept one sign over the whole interval and the nearer
  // endpoint was returned.
  std::vector<std::uint8_t> saturated;
};

constexpr double kDefaultInversionTol = 1e-9;
constexpr int kMaxBisectionSteps = 200;

// Row-wise bisection on sign(F(ỹ, x) − τ). All rows advance together so each
// step costs one batched CDF evaluation.
Inversion invert_f(const DistributionHeads& heads, double tau, const Tensor2& x,
                   SearchInterval interval, double tol = kDefaultInversionTol);

std::vector<double> dual_predict_quantile(const DistributionHeads& heads, double tau,
                                          const Tensor2& x, double alpha,
                                          SearchInterval interval,
                                          double tol = kDefaultInversionTol);

// Percentile-to-value map over a batch of standardized feature rows, in
// standardized target units.
class QuantilePredictor {
 public:
  virtual ~QuantilePredictor() = default;
  virtual std::vector<double> predict(double tau, const Tensor2& x) const = 0;
  // Levels this predictor can answer; empty means any τ in (0, 1).
  virtual std::vector<double> levels() const { return {}; }
};

// Q-direct, F-inverted, or blended predictions from a pair of heads.
class HeadsPredictor final : public QuantilePredictor {
 public:
  HeadsPredictor(const DistributionHeads& heads, InferenceMode mode, double alpha,
                 SearchInterval interval, double tol = kDefaultInversionTol);

  std::vector<double> predict(double tau, const Tensor2& x) const override;

 private:
  const DistributionHeads* heads_;
  InferenceMode mode_;
  double alpha_;
  SearchInterval interval_;
  double tol_;
};

// A DDR model with its own heads, interval and inference mode.
class ModelPredictor final : public QuantilePredictor {
 public:
  explicit ModelPredictor(const DdrModel& model, InferenceMode mode = InferenceMode::q_only,
                          double alpha = 0.5);

  std::vector<double> predict(double tau, const Tensor2& x) const override;

 private:
  ModelHeads heads_;
  HeadsPredictor inner_;
};

// Fixed-level baselines: each level maps to one output column of one model.
class FixedLevelPredictor final : public QuantilePredictor {
 public:
  explicit FixedLevelPredictor(std::vector<const DdrModel*> models);

  std::vector<double> predict(double tau, const Tensor2& x) const override;
  std::vector<double> levels() const override;

 private:
  struct Slot {
    double level;
    const DdrModel* model;
    std::size_t column;
  };
  std::vector<Slot> slots_;
};

std::vector<double> predict_quantile(const DdrModel& model, double tau, const Tensor2& x,
                                     bool original_units = false);
// Rows × levels, evaluated as a single forward batch.
Tensor2 predict_quantile_grid(const DdrModel& model, std::span<const double> taus,
                              const Tensor2& x);
std::vector<double> predict_cdf(const DdrModel& model, double ytilde, const Tensor2& x);

// Node i of the mean grid: 0.01 + 0.98·i/(n+1) for i = 0..n+1.
std::vector<double> mean_grid(std::size_t n);
// Trapezoid over mean_grid(n), divided by the grid span 0.98 so that a
// constant quantile function returns that constant.
std::vector<double> predict_mean(const QuantilePredictor& predictor, const Tensor2& x,
                                 std::size_t n = 99);
std::vector<double> predict_median(const QuantilePredictor& predictor, const Tensor2& x);

// Quantiles at the requested levels plus the derived mean and median.
struct PredictionBundle {
  std::vector<double> taus;
  Tensor2 quantiles;  // rows × taus
  std::vector<double> mean;
  std::vector<double> median;
};

PredictionBundle predict_bundle(const QuantilePredictor& predictor, const Tensor2& x,
                                std::span<const double> taus, std::size_t mean_nodes);

}  // namespace ddr
