// SPDX-License-Identifier: Apache-2.0

#include "ddr/standardization.hpp"

#include "ddr/error.hpp"

#include <cmath>

namespace ddr {

void Standardization::validate() const {
  if (x_mean.size() != x_std.size()) {
    throw Error(ErrorCode::invalid_argument, "standardization: mean/std length mismatch");
  }
  if (!feature_names.empty() && feature_names.size() != x_mean.size()) {
    throw Error(ErrorCode::invalid_argument, "standardization: feature name count mismatch");
  }
  for (double s : x_std) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw Error(ErrorCode::invalid_argument, "standardization: feature std must be positive");
    }
  }
  if (!(y_std > 0.0) || !std::isfinite(y_std) || !std::isfinite(y_mean)) {
    throw Error(ErrorCode::invalid_argument, "standardization: target std must be positive");
  }
  if (!(ytilde_min < ytilde_max)) {
    throw Error(ErrorCode::invalid_argument, "standardization: ytilde_min must be below ytilde_max");
  }
}

Tensor2 Standardization::transform_x(const Tensor2& raw) const {
  if (raw.cols() != x_mean.size()) {
    throw Error(ErrorCode::shape_mismatch,
                "standardization: expected " + std::to_string(x_mean.size()) + " features, got " +
                    std::to_string(raw.cols()));
  }
  Tensor2 out = raw;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) {
      out(r, c) = (raw(r, c) - x_mean[c]) / x_std[c];
    }
  }
  return out;
}

Tensor2 Standardization::inverse_x(const Tensor2& standardized) const {
  if (standardized.cols() != x_mean.size()) {
    throw Error(ErrorCode::shape_mismatch, "standardization: feature count mismatch");
  }
  Tensor2 out = standardized;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) {
      out(r, c) = standardized(r, c) * x_std[c] + x_mean[c];
    }
  }
  return out;
}

std::vector<double> Standardization::transform_y(std::span<const double> y) const {
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    out[i] = transform_y(y[i]);
  }
  return out;
}

std::vector<double> Standardization::inverse_y(std::span<const double> z) const {
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = inverse_y(z[i]);
  }
  return out;
}

Standardization Standardization::identity(std::size_t input_dim) {
  Standardization s;
  s.x_mean.assign(input_dim, 0.0);
  s.x_std.assign(input_dim, 1.0);
  for (std::size_t i = 0; i < input_dim; ++i) {
    s.feature_names.push_back("x" + std::to_string(i + 1));
  }
  return s;
}

}  // namespace ddr
