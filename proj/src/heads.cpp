// SPDX-License-Identifier: Apache-2.0

#include "ddr/heads.hpp"

#include "ddr/error.hpp"

namespace ddr {

std::vector<double> DistributionHeads::median(const Tensor2& x) const { return quantile(0.5, x); }

std::vector<double> DistributionHeads::cdf(std::span<const double> ytilde, const Tensor2& x) const {
  std::vector<double> p = log_odds(ytilde, x);
  for (double& v : p) v = probability(v);
  return p;
}

std::vector<double> DistributionHeads::quantile(double tau, const Tensor2& x) const {
  const std::vector<double> taus(x.rows(), tau);
  return quantile(taus, x);
}

std::vector<double> DistributionHeads::cdf(double ytilde, const Tensor2& x) const {
  const std::vector<double> ys(x.rows(), ytilde);
  return cdf(ys, x);
}

std::vector<double> ModelHeads::quantile(std::span<const double> tau, const Tensor2& x) const {
  return model_->q_forward_unchecked(tau, x);
}

std::vector<double> ModelHeads::log_odds(std::span<const double> ytilde, const Tensor2& x) const {
  return model_->f_forward(ytilde, x).log_odds;
}

std::vector<double> ModelHeads::median(const Tensor2& x) const { return model_->median_forward(x); }

namespace {

std::vector<double> rowwise(const FunctionHeads::RowFn& fn, std::span<const double> s,
                            const Tensor2& x) {
  if (s.size() != x.rows()) {
    throw Error(ErrorCode::shape_mismatch, "FunctionHeads: one scalar per row required");
  }
  std::vector<double> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    out[r] = fn(s[r], x.row_span(r));
  }
  return out;
}

}  // namespace

std::vector<double> FunctionHeads::quantile(std::span<const double> tau, const Tensor2& x) const {
  return rowwise(quantile_, tau, x);
}

std::vector<double> FunctionHeads::log_odds(std::span<const double> ytilde, const Tensor2& x) const {
  if (!log_odds_) {
    throw Error(ErrorCode::incompatible, "FunctionHeads: no CDF head");
  }
  return rowwise(log_odds_, ytilde, x);
}

std::vector<double> FunctionHeads::median(const Tensor2& x) const {
  if (!median_) {
    return DistributionHeads::median(x);
  }
  const std::vector<double> half(x.rows(), 0.5);
  return rowwise(median_, half, x);
}

}  // namespace ddr
