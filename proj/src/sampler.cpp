// SPDX-License-Identifier: Apache-2.0

#include "ddr/sampler.hpp"

#include "ddr/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace ddr {

std::string_view to_string(TauPrior prior) {
  return prior == TauPrior::uniform ? "uniform" : "beta";
}

TauPrior parse_tau_prior(std::string_view text) {
  if (text == "uniform") return TauPrior::uniform;
  if (text == "beta") return TauPrior::beta;
  throw Error(ErrorCode::invalid_argument,
              "unknown tau prior '" + std::string(text) + "' (expected uniform or beta)");
}

void SamplerConfig::validate() const {
  if (batch_size == 0) throw Error(ErrorCode::invalid_argument, "sampler: batch size must be >= 1");
  if (!(tau_clip > 0.0 && tau_clip < 0.5)) {
    throw Error(ErrorCode::invalid_argument, "sampler: tau clip must lie in (0, 0.5)");
  }
  if (tau_prior == TauPrior::beta && !(beta_a > 0.0 && beta_b > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "sampler: beta prior parameters must be positive");
  }
  if (ytilde_min.has_value() != ytilde_max.has_value()) {
    throw Error(ErrorCode::invalid_argument, "sampler: set both target bounds or neither");
  }
  if (ytilde_min && !(*ytilde_min < *ytilde_max)) {
    throw Error(ErrorCode::invalid_argument, "sampler: target bounds must satisfy min < max");
  }
  for (double t : tau_anchors) {
    if (!(t > 0.0 && t < 1.0)) {
      throw Error(ErrorCode::invalid_argument, "sampler: percentile anchors must lie in (0, 1)");
    }
  }
  for (double v : ytilde_anchors) {
    if (!std::isfinite(v)) throw Error(ErrorCode::invalid_argument, "sampler: non-finite anchor");
  }
}

Sampler::Sampler(SamplerConfig config)
    : config_(std::move(config)),
      tau_(config_.seed, "tau"),
      ytilde_(config_.seed, "ytilde"),
      anchor_(config_.seed, "anchor"),
      shuffle_(config_.seed, "shuffle"),
      gamma_a_(config_.beta_a, 1.0),
      gamma_b_(config_.beta_b, 1.0) {
  config_.validate();
}

double Sampler::draw_tau() {
  double t = 0.0;
  if (config_.tau_prior == TauPrior::uniform) {
    t = tau_.uniform();
  } else {
    const double a = gamma_a_(tau_.engine());
    const double b = gamma_b_(tau_.engine());
    t = a + b > 0.0 ? a / (a + b) : 0.5;
  }
  return std::clamp(t, config_.tau_clip, 1.0 - config_.tau_clip);
}

std::vector<double> Sampler::sample_tau(std::size_t n) {
  std::vector<double> out(n);
  for (double& t : out) t = draw_tau();
  return out;
}

std::vector<double> Sampler::sample_ytilde(std::size_t n) {
  if (!config_.ytilde_min) {
    throw Error(ErrorCode::bad_state, "sampler: target bounds are not set");
  }
  std::vector<double> out(n);
  for (double& v : out) v = ytilde_.uniform(*config_.ytilde_min, *config_.ytilde_max);
  return out;
}

std::vector<double> Sampler::pick_tau_anchors(std::size_t n) {
  if (config_.tau_anchors.empty()) {
    throw Error(ErrorCode::bad_state, "sampler: percentile anchor set is empty");
  }
  std::vector<double> out(n);
  for (double& t : out) t = config_.tau_anchors[anchor_.index(config_.tau_anchors.size())];
  return out;
}

std::vector<double> Sampler::pick_ytilde_anchors(std::size_t n) {
  if (config_.ytilde_anchors.empty()) {
    throw Error(ErrorCode::bad_state, "sampler: target anchor set is empty");
  }
  std::vector<double> out(n);
  for (double& v : out) v = config_.ytilde_anchors[anchor_.index(config_.ytilde_anchors.size())];
  return out;
}

std::vector<std::vector<std::size_t>> Sampler::epoch_batches(std::size_t rows) {
  if (rows == 0) throw Error(ErrorCode::invalid_argument, "sampler: empty dataset");
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = rows - 1; i > 0; --i) {
    std::swap(order[i], order[shuffle_.index(i + 1)]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < rows; start += config_.batch_size) {
    const std::size_t end = std::min(rows, start + config_.batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

double empirical_quantile(std::span<const double> values, double tau) {
  if (values.empty()) throw Error(ErrorCode::invalid_argument, "empirical_quantile: no values");
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw Error(ErrorCode::invalid_argument, "empirical_quantile: level outside [0, 1]");
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = tau * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::vector<double> empirical_deciles(std::span<const double> values) {
  std::vector<double> out;
  out.reserve(kDeciles.size());
  for (double t : kDeciles) out.push_back(empirical_quantile(values, t));
  return out;
}

}  // namespace ddr
