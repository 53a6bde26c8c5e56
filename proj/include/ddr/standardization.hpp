// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ddr/tensor.hpp"

#include <span>
#include <string>
#include <vector>

namespace ddr {

// Affine feature/target scaling fitted on the training split, plus the
// empirical target bounds (in standardized units) used for anchor sampling.
struct Standardization {
  std::vector<std::string> feature_names;
  std::vector<double> x_mean;
  std::vector<double> x_std;
  double y_mean = 0.0;
  double y_std = 1.0;
  double ytilde_min = -1.0;
  double ytilde_max = 1.0;

  std::size_t input_dim() const noexcept { return x_mean.size(); }

  // Throws ddr::Error when stds are not strictly positive, the bounds are not
  // ordered, or the per-feature vectors disagree in length.
  void validate() const;

  Tensor2 transform_x(const Tensor2& raw) const;
  Tensor2 inverse_x(const Tensor2& standardized) const;
  double transform_y(double y) const noexcept { return (y - y_mean) / y_std; }
  double inverse_y(double z) const noexcept { return z * y_std + y_mean; }
  std::vector<double> transform_y(std::span<const double> y) const;
  std::vector<double> inverse_y(std::span<const double> z) const;

  static Standardization identity(std::size_t input_dim);

  friend bool operator==(const Standardization&, const Standardization&) = default;
};

}  // namespace ddr
