// SPDX-License-Identifier: Apache-2.0

#include "ddr/metrics.hpp"

#include "ddr/data.hpp"
#include "ddr/error.hpp"
#include "ddr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ddr {

namespace {

void require_pair(std::span<const double> pred, std::span<const double> y, const char* what) {
  if (pred.size() != y.size()) {
    throw Error(ErrorCode::shape_mismatch, std::string(what) + ": prediction/target length mismatch");
  }
  if (y.empty()) throw Error(ErrorCode::invalid_argument, std::string(what) + ": empty input");
}

// Trapezoid over arbitrary sorted levels, normalized by their span.
std::vector<double> mean_over_levels(const QuantilePredictor& predictor, const Tensor2& x,
                                     std::vector<double> levels) {
  std::sort(levels.begin(), levels.end());
  std::vector<double> acc(x.rows(), 0.0);
  std::vector<double> prev = predictor.predict(levels.front(), x);
  for (std::size_t i = 1; i < levels.size(); ++i) {
    const std::vector<double> cur = predictor.predict(levels[i], x);
    const double h = levels[i] - levels[i - 1];
    for (std::size_t r = 0; r < acc.size(); ++r) acc[r] += 0.5 * h * (prev[r] + cur[r]);
    prev = cur;
  }
  const double span = levels.back() - levels.front();
  for (double& a : acc) a /= span;
  return acc;
}

}  // namespace

double mean_pinball(double tau, std::span<const double> pred, std::span<const double> y) {
  require_pair(pred, y, "mean_pinball");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += pinball(tau, y[i], pred[i]);
  return s / static_cast<double>(y.size());
}

double mae(std::span<const double> pred, std::span<const double> y) {
  require_pair(pred, y, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - pred[i]);
  return s / static_cast<double>(y.size());
}

double mse(std::span<const double> pred, std::span<const double> y) {
  require_pair(pred, y, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - pred[i]) * (y[i] - pred[i]);
  return s / static_cast<double>(y.size());
}

QsScore qs_score(const QuantilePredictor& predictor, const Tensor2& x, std::span<const double> y) {
  QsScore s;
  for (std::size_t i = 0; i < kDeciles.size(); ++i) {
    s.per_decile[i] = mean_pinball(kDeciles[i], predictor.predict(kDeciles[i], x), y);
    s.total += s.per_decile[i];
  }
  return s;
}

QsScore qs_score(const Tensor2& decile_predictions, std::span<const double> y) {
  if (decile_predictions.cols() != kDeciles.size()) {
    throw Error(ErrorCode::shape_mismatch, "qs_score: expected one column per decile");
  }
  QsScore s;
  std::vector<double> col(decile_predictions.rows());
  for (std::size_t i = 0; i < kDeciles.size(); ++i) {
    for (std::size_t r = 0; r < col.size(); ++r) col[r] = decile_predictions(r, i);
    s.per_decile[i] = mean_pinball(kDeciles[i], col, y);
    s.total += s.per_decile[i];
  }
  return s;
}

std::vector<double> crossing_grid(std::size_t points) {
  if (points < 2) throw Error(ErrorCode::invalid_argument, "crossing grid needs >= 2 points");
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i) {
    grid[i] = 0.01 + 0.98 * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  return grid;
}

double crossing_rate(const Tensor2& predictions) {
  if (predictions.cols() < 2) {
    throw Error(ErrorCode::invalid_argument, "crossing_rate: grid needs at least 2 levels");
  }
  if (predictions.rows() == 0) throw Error(ErrorCode::invalid_argument, "crossing_rate: no rows");
  std::size_t crossings = 0;
  for (std::size_t r = 0; r < predictions.rows(); ++r) {
    for (std::size_t c = 0; c + 1 < predictions.cols(); ++c) {
      if (predictions(r, c + 1) < predictions(r, c)) ++crossings;
    }
  }
  return static_cast<double>(crossings) /
         static_cast<double>(predictions.rows() * (predictions.cols() - 1));
}

double crossing_rate(const QuantilePredictor& predictor, const Tensor2& x,
                     std::span<const double> grid) {
  if (grid.size() < 2) {
    throw Error(ErrorCode::invalid_argument, "crossing_rate: grid needs at least 2 levels");
  }
  if (!std::is_sorted(grid.begin(), grid.end())) {
    throw Error(ErrorCode::invalid_argument, "crossing_rate: grid must be ascending");
  }
  Tensor2 pred(x.rows(), grid.size());
  for (std::size_t c = 0; c < grid.size(); ++c) {
    const auto q = predictor.predict(grid[c], x);
    for (std::size_t r = 0; r < q.size(); ++r) pred(r, c) = q[r];
  }
  return crossing_rate(pred);
}

std::vector<double> coverage(const QuantilePredictor& predictor, const Tensor2& x,
                             std::span<const double> y, std::span<const double> taus) {
  std::vector<double> out;
  for (double t : taus) {
    const auto q = predictor.predict(t, x);
    require_pair(q, y, "coverage");
    std::size_t hit = 0;
    for (std::size_t r = 0; r < y.size(); ++r) hit += y[r] <= q[r] ? 1 : 0;
    out.push_back(static_cast<double>(hit) / static_cast<double>(y.size()));
  }
  return out;
}

OracleGap oracle_gap(const QuantilePredictor& predictor, const Tensor2& x,
                     std::span<const double> y, const OracleFn& oracle) {
  OracleGap g;
  std::vector<double> truth(x.rows());
  for (std::size_t i = 0; i < kDeciles.size(); ++i) {
    const auto q = predictor.predict(kDeciles[i], x);
    double s = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      truth[r] = oracle(kDeciles[i], x.row_span(r));
      s += std::abs(q[r] - truth[r]);
    }
    g.per_decile[i] = s / static_cast<double>(x.rows());
    g.mean += g.per_decile[i] / static_cast<double>(kDeciles.size());
    g.oracle_qs += mean_pinball(kDeciles[i], truth, y);
  }
  return g;
}

EvalReport evaluate(const QuantilePredictor& predictor, const DistributionHeads* heads,
                    const Tensor2& x, std::span<const double> y, const EvalOptions& options,
                    const OracleFn* oracle) {
  if (x.rows() != y.size() || y.empty()) {
    throw Error(ErrorCode::shape_mismatch, "evaluate: features and targets disagree or are empty");
  }
  EvalReport rep;
  rep.rows = y.size();
  const QsScore qs = qs_score(predictor, x, y);
  rep.qs = qs.total;
  rep.per_decile = qs.per_decile;
  rep.mae = mae(predict_median(predictor, x), y);

  const std::vector<double> fixed = predictor.levels();
  if (options.mean) {
    const auto m = fixed.empty() ? predict_mean(predictor, x, options.mean_nodes)
                                 : mean_over_levels(predictor, x, fixed);
    rep.mse = mse(m, y);
  }
  if (options.crossing) {
    std::vector<double> grid = fixed.empty() ? crossing_grid(options.crossing_points) : fixed;
    std::sort(grid.begin(), grid.end());
    rep.crossing_rate = crossing_rate(predictor, x, grid);
  }
  if (heads != nullptr && heads->has_cdf()) {
    std::vector<double> tau(x.rows());
    double rq = 0.0;
    for (double t : kDeciles) {
      std::fill(tau.begin(), tau.end(), t);
      const auto q = heads->quantile(tau, x);
      const auto f = heads->cdf(q, x);
      for (double v : f) rq += std::abs(t - v);
    }
    rep.recover_q = rq / static_cast<double>(x.rows() * kDeciles.size());
    std::vector<double> anchors = empirical_deciles(y);
    double rf = 0.0;
    std::vector<double> yt(x.rows());
    for (double a : anchors) {
      std::fill(yt.begin(), yt.end(), a);
      const auto f = heads->cdf(yt, x);
      const auto q = heads->quantile(f, x);
      for (double v : q) rf += std::abs(a - v);
    }
    rep.recover_f = rf / static_cast<double>(x.rows() * anchors.size());
  }
  const auto cov = coverage(predictor, x, y, options.coverage_levels);
  for (std::size_t i = 0; i < cov.size(); ++i) {
    rep.coverage.emplace_back(options.coverage_levels[i], cov[i]);
  }
  if (oracle != nullptr) rep.oracle = oracle_gap(predictor, x, y, *oracle);
  return rep;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["rows"] = r.rows;
  j["q_s"] = r.qs;
  j["per_decile"] = r.per_decile;
  j["mae"] = r.mae;
  j["mse"] = r.mse;
  j["crossing_rate"] = r.crossing_rate ? nlohmann::json(*r.crossing_rate) : nlohmann::json();
  if (r.recover_q) j["recover_q"] = *r.recover_q;
  if (r.recover_f) j["recover_f"] = *r.recover_f;
  nlohmann::json cov = nlohmann::json::array();
  for (const auto& [nominal, empirical] : r.coverage) {
    cov.push_back({{"tau", nominal}, {"empirical", empirical}});
  }
  j["coverage"] = cov;
  if (r.oracle) {
    j["oracle_gap"] = {{"mean", r.oracle->mean},
                       {"per_decile", r.oracle->per_decile},
                       {"oracle_q_s", r.oracle->oracle_qs}};
  }
  return j;
}

std::string csv_header(const EvalReport& r) {
  std::ostringstream os;
  os << "rows,q_s";
  for (std::size_t i = 1; i <= 9; ++i) os << ",q" << i * 10;
  os << ",mae,mse,crossing_rate,recover_q,recover_f";
  if (r.oracle) os << ",oracle_gap,oracle_q_s";
  return os.str();
}

std::string csv_row(const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  std::ostringstream os;
  os << r.rows << ',' << format_double(r.qs);
  for (double v : r.per_decile) os << ',' << format_double(v);
  os << ',' << format_double(r.mae) << ',' << format_double(r.mse) << ',' << opt(r.crossing_rate)
     << ',' << opt(r.recover_q) << ',' << opt(r.recover_f);
  if (r.oracle) os << ',' << format_double(r.oracle->mean) << ',' << format_double(r.oracle->oracle_qs);
  return os.str();
}

InferenceMode select_inference_mode(const DdrModel& model, const Tensor2& x,
                                    std::span<const double> y, double alpha) {
  if (!model.arch().cdf_head) return InferenceMode::q_only;
  const ModelPredictor direct(model, InferenceMode::q_only);
  const ModelPredictor dual(model, InferenceMode::dual, alpha);
  return qs_score(dual, x, y).total < qs_score(direct, x, y).total ? InferenceMode::dual
                                                                   : InferenceMode::q_only;
}

}  // namespace ddr
