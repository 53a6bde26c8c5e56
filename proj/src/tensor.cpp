// SPDX-License-Identifier: Apache-2.0

#include "ddr/tensor.hpp"

#include "ddr/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ddr {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::bad_state: return "bad_state";
    case ErrorCode::io: return "io";
    case ErrorCode::format: return "format";
    case ErrorCode::incompatible: return "incompatible";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::usage: return "usage";
  }
  return "unknown";
}

Tensor2::Tensor2(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  if (!std::isfinite(fill)) {
    throw Error(ErrorCode::invalid_argument, "Tensor2: non-finite fill value");
  }
}

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(data.begin(), data.end()) {
  if (data_.size() != rows * cols) {
    throw Error(ErrorCode::shape_mismatch,
                "Tensor2: " + std::to_string(data_.size()) + " values for shape " +
                    std::to_string(rows) + "x" + std::to_string(cols));
  }
  if (!all_finite()) {
    throw Error(ErrorCode::invalid_argument, "Tensor2: non-finite entry");
  }
}

Tensor2 Tensor2::scalar(double value) { return Tensor2(1, 1, std::vector<double>{value}); }

Tensor2 Tensor2::column(std::span<const double> values) {
  return Tensor2(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Tensor2 Tensor2::row(std::span<const double> values) {
  return Tensor2(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Tensor2 Tensor2::from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) {
      throw Error(ErrorCode::shape_mismatch, "Tensor2::from_rows: ragged rows");
    }
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor2(rows.size(), cols, std::move(data));
}

bool Tensor2::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor2 Tensor2::slice_rows(std::size_t begin, std::size_t count) const {
  if (begin + count > rows_) {
    throw Error(ErrorCode::shape_mismatch, "Tensor2::slice_rows: out of range");
  }
  Tensor2 out;
  out.rows_ = count;
  out.cols_ = cols_;
  out.data_.assign(data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_),
                   data_.begin() + static_cast<std::ptrdiff_t>((begin + count) * cols_));
  return out;
}

Tensor2 Tensor2::gather_rows(std::span<const std::size_t> index) const {
  Tensor2 out;
  out.rows_ = index.size();
  out.cols_ = cols_;
  out.data_.resize(index.size() * cols_);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= rows_) {
      throw Error(ErrorCode::shape_mismatch, "Tensor2::gather_rows: index out of range");
    }
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(index[i] * cols_), cols_,
                out.data_.begin() + static_cast<std::ptrdiff_t>(i * cols_));
  }
  return out;
}

}  // namespace ddr
