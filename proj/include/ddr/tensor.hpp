// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

namespace ddr {

using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMajorMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMajorMatrix>;

// Dense row-major 2-d array of doubles. Every entry is finite; constructors
// that accept external data reject NaN and Inf.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor2 scalar(double value);
  static Tensor2 column(std::span<const double> values);
  static Tensor2 row(std::span<const double> values);
  static Tensor2 from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<const double> row_span(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }

  MatrixMap matrix() {
    return MatrixMap(data_.data(), static_cast<Eigen::Index>(rows_),
                     static_cast<Eigen::Index>(cols_));
  }
  ConstMatrixMap matrix() const {
    return ConstMatrixMap(data_.data(), static_cast<Eigen::Index>(rows_),
                          static_cast<Eigen::Index>(cols_));
  }

  bool requires_grad() const noexcept { return requires_grad_; }
  Tensor2& set_requires_grad(bool on) noexcept {
    requires_grad_ = on;
    return *this;
  }

  bool all_finite() const noexcept;
  // Changes the shape, reusing storage. Existing entries keep arbitrary but
  // finite values; callers overwrite them.
  void resize(std::size_t rows, std::size_t cols) {
    rows_ = rows;
    cols_ = cols;
    data_.resize(rows * cols);
  }
  void fill(double value) { std::fill(data_.begin(), data_.end(), value); }
  // Rows [begin, begin + count) as a new tensor.
  Tensor2 slice_rows(std::size_t begin, std::size_t count) const;
  Tensor2 gather_rows(std::span<const std::size_t> index) const;

  friend bool operator==(const Tensor2& a, const Tensor2& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double, Eigen::aligned_allocator<double>> data_;
  bool requires_grad_ = false;
};

}  // namespace ddr
