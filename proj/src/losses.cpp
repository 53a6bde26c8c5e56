// SPDX-License-Identifier: Apache-2.0

#include "ddr/losses.hpp"

#include "ddr/error.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace ddr {

namespace {

constexpr std::array<std::string_view, kLossTermCount> kTermNames{
    "pinball_mc", "pinball_anchor", "cdf_nll_mc", "cdf_nll_anchor", "grad_q", "grad_f",
    "recover_q",  "recover_f",      "dual_q",     "dual_f",         "median"};

void require_rows(std::size_t n, std::size_t expected, const char* what) {
  if (n != expected) {
    throw Error(ErrorCode::shape_mismatch, std::string(what) + ": expected " +
                                               std::to_string(expected) + " values, got " +
                                               std::to_string(n));
  }
}

void require_nonempty(const Tensor2& x, const char* what) {
  if (x.rows() == 0) {
    throw Error(ErrorCode::invalid_argument, std::string(what) + ": empty batch");
  }
}

void require_positive_eps(double eps, const char* what) {
  if (!(eps > 0.0)) {
    throw Error(ErrorCode::invalid_argument, std::string(what) + ": step must be positive");
  }
}

std::vector<double> shifted(std::span<const double> v, double delta) {
  std::vector<double> out(v.begin(), v.end());
  for (double& e : out) e += delta;
  return out;
}

double negative_slope_sum(std::span<const double> hi, std::span<const double> lo, double eps) {
  double total = 0.0;
  for (std::size_t i = 0; i < hi.size(); ++i) {
    const double slope = (hi[i] - lo[i]) / (2.0 * eps);
    total += std::max(-slope, 0.0);
  }
  return total;
}

}  // namespace

std::string_view to_string(LossTerm term) { return kTermNames[index(term)]; }

LossTerm parse_loss_term(std::string_view text) {
  for (std::size_t i = 0; i < kLossTermCount; ++i) {
    if (kTermNames[i] == text) return kAllLossTerms[i];
  }
  throw Error(ErrorCode::invalid_argument, "unknown loss term '" + std::string(text) + "'");
}

LossWeights uniform_weights(double value) {
  LossWeights w;
  w.fill(value);
  return w;
}

double pinball(double tau, double y, double y_pred) noexcept {
  const double r = y - y_pred;
  return tau * std::max(r, 0.0) + (1.0 - tau) * std::max(-r, 0.0);
}

double cdf_nll(double indicator, double log_odds) noexcept {
  return std::max(log_odds, 0.0) - indicator * log_odds + std::log1p(std::exp(-std::abs(log_odds)));
}

double probe_centre(double tau, double eps) noexcept {
  const double margin = eps + kTauEps;
  if (margin >= 0.5) return 0.5;
  return std::clamp(tau, margin, 1.0 - margin);
}

// ---------------------------------------------------------------------------

double pinball_mc(const DistributionHeads& heads, const Tensor2& x, std::span<const double> y,
                  std::span<const double> tau) {
  require_nonempty(x, "pinball_mc");
  require_rows(y.size(), x.rows(), "pinball_mc targets");
  require_rows(tau.size(), x.rows(), "pinball_mc percentiles");
  const auto q = heads.quantile(tau, x);
  double total = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) total += pinball(tau[i], y[i], q[i]);
  return total / static_cast<double>(q.size());
}

double cdf_nll_mc(const DistributionHeads& heads, const Tensor2& x, std::span<const double> y,
                  std::span<const double> ytilde) {
  require_nonempty(x, "cdf_nll_mc");
  require_rows(y.size(), x.rows(), "cdf_nll_mc targets");
  require_rows(ytilde.size(), x.rows(), "cdf_nll_mc anchors");
  const auto eta = heads.log_odds(ytilde, x);
  double total = 0.0;
  for (std::size_t i = 0; i < eta.size(); ++i) {
    total += cdf_nll(y[i] <= ytilde[i] ? 1.0 : 0.0, eta[i]);
  }
  return total / static_cast<double>(eta.size());
}

double median_loss(const DistributionHeads& heads, const Tensor2& x, std::span<const double> y) {
  require_nonempty(x, "median_loss");
  require_rows(y.size(), x.rows(), "median_loss targets");
  const auto m = heads.median(x);
  double total = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) total += pinball(0.5, y[i], m[i]);
  return total / static_cast<double>(m.size());
}

double grad_penalty_q(const DistributionHeads& heads, std::span<const double> tau,
                      const Tensor2& x, double eps) {
  require_positive_eps(eps, "grad_penalty_q");
  require_rows(tau.size(), x.rows(), "grad_penalty_q percentiles");
  for (double t : tau) {
    if (!(t - eps > 0.0 && t + eps < 1.0)) {
      throw Error(ErrorCode::invalid_argument, "grad_penalty_q: probe τ±ε leaves (0, 1)");
    }
  }
  const auto hi = heads.quantile(shifted(tau, eps), x);
  const auto lo = heads.quantile(shifted(tau, -eps), x);
  return negative_slope_sum(hi, lo, eps);
}

double grad_penalty_f(const DistributionHeads& heads, std::span<const double> ytilde,
                      const Tensor2& x, double eps) {
  require_positive_eps(eps, "grad_penalty_f");
  require_rows(ytilde.size(), x.rows(), "grad_penalty_f anchors");
  const auto hi = heads.cdf(shifted(ytilde, eps), x);
  const auto lo = heads.cdf(shifted(ytilde, -eps), x);
  return negative_slope_sum(hi, lo, eps);
}

PairedLoss recover_losses(const DistributionHeads& heads, std::span<const double> tau,
                          std::span<const double> ytilde, const Tensor2& x) {
  require_nonempty(x, "recover_losses");
  require_rows(tau.size(), x.rows(), "recover_losses percentiles");
  require_rows(ytilde.size(), x.rows(), "recover_losses anchors");
  const auto q = heads.quantile(tau, x);
  const auto fq = heads.cdf(q, x);
  const auto f = heads.cdf(ytilde, x);
  const auto qf = heads.quantile(f, x);
  PairedLoss out;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    out.q += std::abs(tau[i] - fq[i]);
    out.f += std::abs(ytilde[i] - qf[i]);
  }
  out.q /= static_cast<double>(x.rows());
  out.f /= static_cast<double>(x.rows());
  return out;
}

PairedLoss dual_losses(const DistributionHeads& heads, std::span<const double> tau,
                       std::span<const double> ytilde, const Tensor2& x, double eps_tau,
                       double eps_ytilde) {
  require_positive_eps(eps_tau, "dual_losses");
  require_positive_eps(eps_ytilde, "dual_losses");
  require_rows(tau.size(), x.rows(), "dual_losses percentiles");
  require_rows(ytilde.size(), x.rows(), "dual_losses anchors");
  auto qfq = [&](std::span<const double> t) {
    return heads.quantile(heads.cdf(heads.quantile(t, x), x), x);
  };
  auto fqf = [&](std::span<const double> v) {
    return heads.cdf(heads.quantile(heads.cdf(v, x), x), x);
  };
  PairedLoss out;
  out.q = negative_slope_sum(qfq(shifted(tau, eps_tau)), qfq(shifted(tau, -eps_tau)), eps_tau);
  out.f = negative_slope_sum(fqf(shifted(ytilde, eps_ytilde)), fqf(shifted(ytilde, -eps_ytilde)),
                             eps_ytilde);
  return out;
}

LossBreakdown total_loss(const DistributionHeads& heads, const Tensor2& x,
                         std::span<const double> y, const LossSamples& samples,
                         const LossWeights& weights, const LossMask& active,
                         const LossOptions& options) {
  auto on = [&](LossTerm t) { return active[index(t)]; };
  std::vector<double> probe(samples.tau.size());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    probe[i] = probe_centre(samples.tau[i], options.eps_tau);
  }

  LossBreakdown b;
  if (on(LossTerm::median)) b[LossTerm::median] = median_loss(heads, x, y);
  if (on(LossTerm::pinball_mc)) b[LossTerm::pinball_mc] = pinball_mc(heads, x, y, samples.tau);
  if (on(LossTerm::pinball_anchor)) {
    b[LossTerm::pinball_anchor] = pinball_mc(heads, x, y, samples.tau_anchor);
  }
  if (on(LossTerm::cdf_nll_mc)) b[LossTerm::cdf_nll_mc] = cdf_nll_mc(heads, x, y, samples.ytilde);
  if (on(LossTerm::cdf_nll_anchor)) {
    b[LossTerm::cdf_nll_anchor] = cdf_nll_mc(heads, x, y, samples.ytilde_anchor);
  }
  if (on(LossTerm::grad_q)) b[LossTerm::grad_q] = grad_penalty_q(heads, probe, x, options.eps_tau);
  if (on(LossTerm::grad_f)) {
    b[LossTerm::grad_f] = grad_penalty_f(heads, samples.ytilde, x, options.eps_ytilde);
  }
  if (on(LossTerm::recover_q) || on(LossTerm::recover_f)) {
    const auto r = recover_losses(heads, samples.tau, samples.ytilde, x);
    if (on(LossTerm::recover_q)) b[LossTerm::recover_q] = r.q;
    if (on(LossTerm::recover_f)) b[LossTerm::recover_f] = r.f;
  }
  if (on(LossTerm::dual_q) || on(LossTerm::dual_f)) {
    const auto d = dual_losses(heads, probe, samples.ytilde, x, options.eps_tau, options.eps_ytilde);
    if (on(LossTerm::dual_q)) b[LossTerm::dual_q] = d.q;
    if (on(LossTerm::dual_f)) b[LossTerm::dual_f] = d.f;
  }
  for (std::size_t i = 0; i < kLossTermCount; ++i) {
    b.total += weights[i] * b.component[i];
  }
  return b;
}

// ---------------------------------------------------------------------------

namespace {

NodeId pinball_rows(Tape& t, NodeId tau, NodeId y, NodeId pred) {
  const NodeId r = t.sub(y, pred);
  return t.add(t.mul(tau, t.relu(r)), t.mul(t.affine(tau, -1.0, 1.0), t.neg_relu(r)));
}

NodeId nll_rows(Tape& t, NodeId indicator, NodeId eta) {
  return t.sub(t.softplus(eta), t.mul(indicator, eta));
}

NodeId negative_slope(Tape& t, NodeId hi, NodeId lo, double eps) {
  return t.sum(t.neg_relu(t.affine(t.sub(hi, lo), 1.0 / (2.0 * eps), 0.0)));
}

void fill_column(Tensor2& dst, std::span<const double> src) {
  dst.resize(src.size(), 1);
  std::copy(src.begin(), src.end(), dst.values().begin());
}

}  // namespace

LossGraph::LossGraph(const ArchSpec& arch, const LossMask& active, LossOptions options)
    : nodes_(tape_, arch), active_(active), options_(options) {
  require_positive_eps(options_.eps_tau, "LossGraph");
  require_positive_eps(options_.eps_ytilde, "LossGraph");
  auto on = [&](LossTerm t) { return active_[index(t)]; };
  const bool needs_q = on(LossTerm::pinball_mc) || on(LossTerm::pinball_anchor) ||
                       on(LossTerm::grad_q) || on(LossTerm::recover_q) ||
                       on(LossTerm::recover_f) || on(LossTerm::dual_q) || on(LossTerm::dual_f);
  const bool needs_f = on(LossTerm::cdf_nll_mc) || on(LossTerm::cdf_nll_anchor) ||
                       on(LossTerm::grad_f) || on(LossTerm::recover_q) ||
                       on(LossTerm::recover_f) || on(LossTerm::dual_q) || on(LossTerm::dual_f);
  if (needs_q && !arch.quantile_head) {
    throw Error(ErrorCode::incompatible, "LossGraph: active terms need a quantile head");
  }
  if (needs_f && !arch.cdf_head) {
    throw Error(ErrorCode::incompatible, "LossGraph: active terms need a CDF head");
  }

  Tape& t = tape_;
  const NodeId x = t.leaf("x", Tape::any, arch.input_dim);
  const NodeId y = t.leaf("y", Tape::any, 1);
  auto input = [&](const char* name) { return t.leaf(name, Tape::any, 1); };
  auto prob = [&](NodeId v) { return t.sigmoid(nodes_.log_odds(x, v)); };

  std::optional<NodeId> tau, q_mc, eta_mc, f_mc, ytilde, q_hi, q_lo, f_hi, f_lo;
  auto get_tau = [&] { return tau ? *tau : *(tau = input("tau")); };
  auto get_ytilde = [&] { return ytilde ? *ytilde : *(ytilde = input("ytilde")); };
  auto get_q_mc = [&] { return q_mc ? *q_mc : *(q_mc = nodes_.quantile(x, get_tau())); };
  auto get_eta_mc = [&] { return eta_mc ? *eta_mc : *(eta_mc = nodes_.log_odds(x, get_ytilde())); };
  auto get_f_mc = [&] { return f_mc ? *f_mc : *(f_mc = t.sigmoid(get_eta_mc())); };
  auto get_q_probe = [&] {
    if (!q_hi) {
      q_hi = nodes_.quantile(x, input("tau_hi"));
      q_lo = nodes_.quantile(x, input("tau_lo"));
    }
  };
  auto get_f_probe = [&] {
    if (!f_hi) {
      f_hi = prob(input("ytilde_hi"));
      f_lo = prob(input("ytilde_lo"));
    }
  };

  auto set = [&](LossTerm term, NodeId node) {
    t.label(node, std::string(to_string(term)));
    component_nodes_[index(term)] = node;
  };

  if (on(LossTerm::median)) {
    set(LossTerm::median, t.affine(t.mean(t.abs(t.sub(y, nodes_.median(x)))), 0.5, 0.0));
  }
  if (on(LossTerm::pinball_mc)) {
    set(LossTerm::pinball_mc, t.mean(pinball_rows(t, get_tau(), y, get_q_mc())));
  }
  if (on(LossTerm::pinball_anchor)) {
    const NodeId ta = input("tau_anchor");
    set(LossTerm::pinball_anchor, t.mean(pinball_rows(t, ta, y, nodes_.quantile(x, ta))));
  }
  if (on(LossTerm::cdf_nll_mc)) {
    set(LossTerm::cdf_nll_mc, t.mean(nll_rows(t, input("ind_mc"), get_eta_mc())));
  }
  if (on(LossTerm::cdf_nll_anchor)) {
    const NodeId ya = input("ytilde_anchor");
    set(LossTerm::cdf_nll_anchor, t.mean(nll_rows(t, input("ind_anchor"), nodes_.log_odds(x, ya))));
  }
  if (on(LossTerm::grad_q)) {
    get_q_probe();
    set(LossTerm::grad_q, negative_slope(t, *q_hi, *q_lo, options_.eps_tau));
  }
  if (on(LossTerm::grad_f)) {
    get_f_probe();
    set(LossTerm::grad_f, negative_slope(t, *f_hi, *f_lo, options_.eps_ytilde));
  }
  if (on(LossTerm::recover_q)) {
    set(LossTerm::recover_q, t.mean(t.abs(t.sub(get_tau(), prob(get_q_mc())))));
  }
  if (on(LossTerm::recover_f)) {
    set(LossTerm::recover_f, t.mean(t.abs(t.sub(get_ytilde(), nodes_.quantile(x, get_f_mc())))));
  }
  if (on(LossTerm::dual_q)) {
    get_q_probe();
    const NodeId hi = nodes_.quantile(x, prob(*q_hi));
    const NodeId lo = nodes_.quantile(x, prob(*q_lo));
    set(LossTerm::dual_q, negative_slope(t, hi, lo, options_.eps_tau));
  }
  if (on(LossTerm::dual_f)) {
    get_f_probe();
    const NodeId hi = prob(nodes_.quantile(x, *f_hi));
    const NodeId lo = prob(nodes_.quantile(x, *f_lo));
    set(LossTerm::dual_f, negative_slope(t, hi, lo, options_.eps_ytilde));
  }

  std::optional<NodeId> total;
  for (std::size_t i = 0; i < kLossTermCount; ++i) {
    if (!active_[i]) continue;
    const NodeId w = t.leaf("w_" + std::string(kTermNames[i]), 1, 1);
    const NodeId term = t.mul(w, component_nodes_[i]);
    total = total ? t.add(*total, term) : term;
  }
  if (!total) {
    throw Error(ErrorCode::invalid_argument, "LossGraph: no active loss terms");
  }
  total_ = *total;
  t.label(total_, "total");
  t.set_output(total_);
}

LossBreakdown LossGraph::run(const DdrModel& model, const Tensor2& x, std::span<const double> y,
                             const LossSamples& s, const LossWeights& weights) {
  const std::size_t n = x.rows();
  require_nonempty(x, "LossGraph");
  require_rows(y.size(), n, "LossGraph targets");
  auto on = [&](LossTerm t) { return active_[index(t)]; };
  Feed feed;
  nodes_.bind(feed, model);
  feed.bind("x", x);
  fill_column(y_, y);
  feed.bind("y", y_);

  const bool uses_tau = on(LossTerm::pinball_mc) || on(LossTerm::recover_q) ||
                        on(LossTerm::recover_f) || on(LossTerm::grad_q) || on(LossTerm::dual_q);
  const bool uses_ytilde = on(LossTerm::cdf_nll_mc) || on(LossTerm::recover_q) ||
                           on(LossTerm::recover_f) || on(LossTerm::grad_f) ||
                           on(LossTerm::dual_f);
  if (uses_tau) {
    require_rows(s.tau.size(), n, "LossGraph percentiles");
    fill_column(tau_, s.tau);
    feed.bind("tau", tau_);
  }
  if (on(LossTerm::grad_q) || on(LossTerm::dual_q)) {
    tau_hi_.resize(n, 1);
    tau_lo_.resize(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const double c = probe_centre(s.tau[i], options_.eps_tau);
      tau_hi_[i] = c + options_.eps_tau;
      tau_lo_[i] = c - options_.eps_tau;
    }
    feed.bind("tau_hi", tau_hi_).bind("tau_lo", tau_lo_);
  }
  if (on(LossTerm::pinball_anchor)) {
    require_rows(s.tau_anchor.size(), n, "LossGraph anchor percentiles");
    fill_column(tau_anchor_, s.tau_anchor);
    feed.bind("tau_anchor", tau_anchor_);
  }
  if (uses_ytilde) {
    require_rows(s.ytilde.size(), n, "LossGraph anchors");
    fill_column(ytilde_, s.ytilde);
    feed.bind("ytilde", ytilde_);
  }
  if (on(LossTerm::cdf_nll_mc)) {
    ind_mc_.resize(n, 1);
    for (std::size_t i = 0; i < n; ++i) ind_mc_[i] = y[i] <= s.ytilde[i] ? 1.0 : 0.0;
    feed.bind("ind_mc", ind_mc_);
  }
  if (on(LossTerm::grad_f) || on(LossTerm::dual_f)) {
    ytilde_hi_.resize(n, 1);
    ytilde_lo_.resize(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
      ytilde_hi_[i] = s.ytilde[i] + options_.eps_ytilde;
      ytilde_lo_[i] = s.ytilde[i] - options_.eps_ytilde;
    }
    feed.bind("ytilde_hi", ytilde_hi_).bind("ytilde_lo", ytilde_lo_);
  }
  if (on(LossTerm::cdf_nll_anchor)) {
    require_rows(s.ytilde_anchor.size(), n, "LossGraph anchor values");
    fill_column(ytilde_anchor_, s.ytilde_anchor);
    ind_anchor_.resize(n, 1);
    for (std::size_t i = 0; i < n; ++i) ind_anchor_[i] = y[i] <= s.ytilde_anchor[i] ? 1.0 : 0.0;
    feed.bind("ytilde_anchor", ytilde_anchor_).bind("ind_anchor", ind_anchor_);
  }
  for (std::size_t i = 0; i < kLossTermCount; ++i) {
    if (!active_[i]) continue;
    weights_[i] = Tensor2::scalar(weights[i]);
    feed.bind("w_" + std::string(kTermNames[i]), weights_[i]);
  }

  const Tensor2& total = tape_.forward(feed);
  LossBreakdown b;
  for (std::size_t i = 0; i < kLossTermCount; ++i) {
    if (active_[i]) b.component[i] = tape_.value(component_nodes_[i])[0];
  }
  b.total = total[0];
  return b;
}

LossBreakdown LossGraph::evaluate(const DdrModel& model, const Tensor2& x,
                                  std::span<const double> y, const LossSamples& samples,
                                  const LossWeights& weights) {
  return run(model, x, y, samples, weights);
}

std::pair<LossBreakdown, GradientMap> LossGraph::gradient(const DdrModel& model, const Tensor2& x,
                                                          std::span<const double> y,
                                                          const LossSamples& samples,
                                                          const LossWeights& weights) {
  LossBreakdown b = run(model, x, y, samples, weights);
  GradientMap g = tape_.backward(Tensor2::scalar(1.0));
  return {b, std::move(g)};
}

// ---------------------------------------------------------------------------

FixedQuantileLoss::FixedQuantileLoss(const ArchSpec& arch, std::vector<double> levels)
    : nodes_(tape_, arch), levels_(std::move(levels)) {
  if (levels_.size() != arch.output_dim) {
    throw Error(ErrorCode::incompatible, "FixedQuantileLoss: one level per output column required");
  }
  for (double t : levels_) {
    if (!(t > 0.0 && t < 1.0)) {
      throw Error(ErrorCode::invalid_argument, "FixedQuantileLoss: level outside (0, 1)");
    }
  }
  Tape& t = tape_;
  const NodeId x = t.leaf("x", Tape::any, arch.input_dim);
  const NodeId y = t.leaf("y", Tape::any, arch.output_dim);
  const NodeId tau = t.leaf("tau", Tape::any, arch.output_dim);
  const NodeId rows = pinball_rows(t, tau, y, nodes_.median(x));
  // Σ_c mean_r = (Σ over all entries) / rows.
  const NodeId total = t.mul(t.sum(rows), t.leaf("inv_rows", 1, 1));
  t.label(total, "fixed_quantile_total");
  t.set_output(total);
}

void FixedQuantileLoss::prepare(std::span<const double> y, std::size_t rows) {
  require_rows(y.size(), rows, "FixedQuantileLoss targets");
  if (rows == 0) {
    throw Error(ErrorCode::invalid_argument, "FixedQuantileLoss: empty batch");
  }
  const std::size_t k = levels_.size();
  y_.resize(rows, k);
  tau_.resize(rows, k);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < k; ++c) {
      y_(r, c) = y[r];
      tau_(r, c) = levels_[c];
    }
  }
}

double FixedQuantileLoss::evaluate(const DdrModel& model, const Tensor2& x,
                                   std::span<const double> y) {
  prepare(y, x.rows());
  inv_rows_ = Tensor2::scalar(1.0 / static_cast<double>(x.rows()));
  Feed feed;
  nodes_.bind(feed, model);
  feed.bind("x", x).bind("y", y_).bind("tau", tau_).bind("inv_rows", inv_rows_);
  return tape_.forward(feed)[0];
}

std::pair<double, GradientMap> FixedQuantileLoss::gradient(const DdrModel& model, const Tensor2& x,
                                                           std::span<const double> y) {
  const double value = evaluate(model, x, y);
  return {value, tape_.backward(Tensor2::scalar(1.0))};
}

}  // namespace ddr
