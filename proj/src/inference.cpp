// SPDX-License-Identifier: Apache-2.0

#include "ddr/inference.hpp"

#include "ddr/error.hpp"

#include <cmath>
#include <string>

namespace ddr {

namespace {

void require_level(double tau, const char* what) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw Error(ErrorCode::invalid_argument,
                std::string(what) + ": percentile must lie in (0, 1), got " + std::to_string(tau));
  }
}

void require_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::invalid_argument, "blend weight alpha must lie in [0, 1]");
  }
}

}  // namespace

std::string_view to_string(InferenceMode mode) {
  switch (mode) {
    case InferenceMode::q_only: return "q-only";
    case InferenceMode::f_invert: return "f-invert";
    case InferenceMode::dual: return "dual";
  }
  return "unknown";
}

InferenceMode parse_inference_mode(std::string_view text) {
  for (auto m : {InferenceMode::q_only, InferenceMode::f_invert, InferenceMode::dual}) {
    if (text == to_string(m)) return m;
  }
  throw Error(ErrorCode::invalid_argument, "unknown inference mode '" + std::string(text) +
                                               "' (expected q-only, f-invert or dual)");
}

SearchInterval search_interval(const Standardization& stats) {
  const double range = stats.ytilde_max - stats.ytilde_min;
  return {stats.ytilde_min - 0.5 * range, stats.ytilde_max + 0.5 * range};
}

Inversion invert_f(const DistributionHeads& heads, double tau, const Tensor2& x,
                   SearchInterval interval, double tol) {
  if (!(tol > 0.0)) throw Error(ErrorCode::invalid_argument, "invert_f: tolerance must be positive");
  require_level(tau, "invert_f");
  if (!(interval.lo < interval.hi)) {
    throw Error(ErrorCode::invalid_argument, "invert_f: empty search interval");
  }
  if (!heads.has_cdf()) throw Error(ErrorCode::incompatible, "invert_f: model has no CDF head");

  const std::size_t n = x.rows();
  std::vector<double> lo(n, interval.lo);
  std::vector<double> hi(n, interval.hi);
  std::vector<double> g_lo = heads.cdf(lo, x);
  std::vector<double> g_hi = heads.cdf(hi, x);
  Inversion out;
  out.value.resize(n);
  out.saturated.assign(n, 0);
  for (std::size_t r = 0; r < n; ++r) {
    g_lo[r] -= tau;
    g_hi[r] -= tau;
    if ((g_lo[r] < 0.0) == (g_hi[r] < 0.0)) {
      out.saturated[r] = 1;
      out.value[r] = std::abs(g_lo[r]) <= std::abs(g_hi[r]) ? interval.lo : interval.hi;
    }
  }

  std::vector<double> mid(n);
  double width = interval.hi - interval.lo;
  for (int step = 0; step < kMaxBisectionSteps && width >= tol; ++step) {
    for (std::size_t r = 0; r < n; ++r) mid[r] = 0.5 * (lo[r] + hi[r]);
    const std::vector<double> f_mid = heads.cdf(mid, x);
    for (std::size_t r = 0; r < n; ++r) {
      const double g = f_mid[r] - tau;
      if ((g < 0.0) == (g_lo[r] < 0.0)) {
        lo[r] = mid[r];
        g_lo[r] = g;
      } else {
        hi[r] = mid[r];
      }
    }
    width *= 0.5;
  }
  for (std::size_t r = 0; r < n; ++r) {
    if (!out.saturated[r]) out.value[r] = 0.5 * (lo[r] + hi[r]);
  }
  return out;
}

std::vector<double> dual_predict_quantile(const DistributionHeads& heads, double tau,
                                          const Tensor2& x, double alpha,
                                          SearchInterval interval, double tol) {
  require_alpha(alpha);
  require_level(tau, "dual_predict_quantile");
  const std::vector<double> q = heads.quantile(tau, x);
  const Inversion inv = invert_f(heads, tau, x, interval, tol);
  std::vector<double> out(q.size());
  for (std::size_t r = 0; r < q.size(); ++r) {
    out[r] = alpha * q[r] + (1.0 - alpha) * inv.value[r];
  }
  return out;
}

HeadsPredictor::HeadsPredictor(const DistributionHeads& heads, InferenceMode mode, double alpha,
                               SearchInterval interval, double tol)
    : heads_(&heads), mode_(mode), alpha_(alpha), interval_(interval), tol_(tol) {
  require_alpha(alpha);
  if (mode != InferenceMode::q_only && !heads.has_cdf()) {
    throw Error(ErrorCode::incompatible,
                std::string(to_string(mode)) + " inference needs a model with a CDF head");
  }
}

std::vector<double> HeadsPredictor::predict(double tau, const Tensor2& x) const {
  require_level(tau, "predict");
  switch (mode_) {
    case InferenceMode::q_only: return heads_->quantile(tau, x);
    case InferenceMode::f_invert: return invert_f(*heads_, tau, x, interval_, tol_).value;
    case InferenceMode::dual: return dual_predict_quantile(*heads_, tau, x, alpha_, interval_, tol_);
  }
  return {};
}

ModelPredictor::ModelPredictor(const DdrModel& model, InferenceMode mode, double alpha)
    : heads_(model), inner_(heads_, mode, alpha, search_interval(model.stats())) {
  if (!model.arch().quantile_head && mode != InferenceMode::f_invert) {
    throw Error(ErrorCode::incompatible, "model has no quantile head");
  }
}

std::vector<double> ModelPredictor::predict(double tau, const Tensor2& x) const {
  return inner_.predict(tau, x);
}

FixedLevelPredictor::FixedLevelPredictor(std::vector<const DdrModel*> models) {
  for (const DdrModel* m : models) {
    const auto& levels = m->fixed_levels();
    if (levels.size() != m->arch().output_dim) {
      throw Error(ErrorCode::incompatible, "fixed-level model: one level per output column required");
    }
    for (std::size_t c = 0; c < levels.size(); ++c) slots_.push_back({levels[c], m, c});
  }
  if (slots_.empty()) throw Error(ErrorCode::invalid_argument, "fixed-level predictor: no levels");
}

std::vector<double> FixedLevelPredictor::predict(double tau, const Tensor2& x) const {
  for (const Slot& s : slots_) {
    if (std::abs(s.level - tau) <= 1e-9) {
      const Tensor2 out = s.model->backbone_forward(x);
      std::vector<double> col(out.rows());
      for (std::size_t r = 0; r < out.rows(); ++r) col[r] = out(r, s.column);
      return col;
    }
  }
  throw Error(ErrorCode::incompatible,
              "fixed-level predictor has no output for percentile " + std::to_string(tau));
}

std::vector<double> FixedLevelPredictor::levels() const {
  std::vector<double> out;
  for (const Slot& s : slots_) out.push_back(s.level);
  return out;
}

std::vector<double> predict_quantile(const DdrModel& model, double tau, const Tensor2& x,
                                     bool original_units) {
  std::vector<double> q = model.q_forward(tau, x);
  if (original_units) q = model.stats().inverse_y(q);
  return q;
}

Tensor2 predict_quantile_grid(const DdrModel& model, std::span<const double> taus,
                              const Tensor2& x) {
  const std::size_t n = x.rows();
  const std::size_t k = taus.size();
  Tensor2 tiled(n * k, x.cols());
  std::vector<double> tau_col(n * k);
  for (std::size_t t = 0; t < k; ++t) {
    require_level(taus[t], "predict_quantile_grid");
    for (std::size_t r = 0; r < n; ++r) {
      const auto src = x.row_span(r);
      std::copy(src.begin(), src.end(), tiled.values().begin() +
                                            static_cast<std::ptrdiff_t>((t * n + r) * x.cols()));
      tau_col[t * n + r] = taus[t];
    }
  }
  const std::vector<double> q = model.q_forward(tau_col, tiled);
  Tensor2 out(n, k);
  for (std::size_t t = 0; t < k; ++t) {
    for (std::size_t r = 0; r < n; ++r) out(r, t) = q[t * n + r];
  }
  return out;
}

std::vector<double> predict_cdf(const DdrModel& model, double ytilde, const Tensor2& x) {
  return model.f_forward(ytilde, x).probability;
}

std::vector<double> mean_grid(std::size_t n) {
  if (n < 2) throw Error(ErrorCode::invalid_argument, "mean grid needs n >= 2");
  std::vector<double> grid(n + 2);
  for (std::size_t i = 0; i <= n + 1; ++i) {
    grid[i] = 0.01 + 0.98 * static_cast<double>(i) / static_cast<double>(n + 1);
  }
  return grid;
}

std::vector<double> predict_mean(const QuantilePredictor& predictor, const Tensor2& x,
                                 std::size_t n) {
  const std::vector<double> grid = mean_grid(n);
  const double delta = 0.98 / static_cast<double>(n + 1);
  std::vector<double> acc(x.rows(), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double w = (i == 0 || i == grid.size() - 1) ? 1.0 : 2.0;
    const std::vector<double> q = predictor.predict(grid[i], x);
    for (std::size_t r = 0; r < acc.size(); ++r) acc[r] += w * q[r];
  }
  for (double& a : acc) a = 0.5 * delta * a / 0.98;
  return acc;
}

std::vector<double> predict_median(const QuantilePredictor& predictor, const Tensor2& x) {
  return predictor.predict(0.5, x);
}

PredictionBundle predict_bundle(const QuantilePredictor& predictor, const Tensor2& x,
                                std::span<const double> taus, std::size_t mean_nodes) {
  PredictionBundle b;
  b.taus.assign(taus.begin(), taus.end());
  b.quantiles = Tensor2(x.rows(), taus.size());
  for (std::size_t t = 0; t < taus.size(); ++t) {
    const auto q = predictor.predict(taus[t], x);
    for (std::size_t r = 0; r < q.size(); ++r) b.quantiles(r, t) = q[r];
  }
  if (mean_nodes > 0) b.mean = predict_mean(predictor, x, mean_nodes);
  b.median = predict_median(predictor, x);
  return b;
}

}  // namespace ddr
