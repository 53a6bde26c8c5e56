// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ddr/standardization.hpp"
#include "ddr/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ddr {

enum class Split : std::uint8_t { train, validation, test };

// Feature matrix and target vector. Until `stats` is set both are in the
// units of the source file; afterwards they are standardized.
struct Dataset {
  std::vector<std::string> feature_names;
  std::string target_name = "y";
  Tensor2 x;
  std::vector<double> y;
  // One entry per row. Empty means every row belongs to the training split.
  std::vector<Split> split;
  std::optional<Standardization> stats;
  std::size_t rejected_rows = 0;
  std::vector<std::string> warnings;

  std::size_t rows() const noexcept { return y.size(); }
  std::size_t dim() const noexcept { return x.cols(); }
  Split split_of(std::size_t row) const { return split.empty() ? Split::train : split[row]; }
  std::vector<std::size_t> rows_in(Split which) const;
  // Rows of one split, in their original order.
  Dataset subset(Split which) const;
  Dataset select(std::span<const std::size_t> rows) const;
  void validate() const;
};

// Comma-separated text with a header row. The target is the named column, or
// the last column when `target` is empty. Rows with a missing or non-numeric
// cell are skipped and counted in `rejected_rows`.
Dataset load_csv(const std::filesystem::path& path, std::optional<std::string> target = {});
Dataset parse_csv(std::istream& in, std::optional<std::string> target = {});
void write_csv(const std::filesystem::path& path, const Dataset& data);

// Shortest decimal text that reads back to the same double.
std::string format_double(double value);

// Random disjoint train/validation(/test) assignment. Every split that is
// asked for must end up nonempty.
void assign_split(Dataset& data, double validation_fraction, std::uint64_t seed,
                  double test_fraction = 0.0);

// Fits feature and target scaling on the training rows only and applies it to
// every row. Features that are constant on the training rows are dropped with
// a warning. The target bounds are the training-row extremes.
Dataset standardize(const Dataset& raw);
// Applies existing scaling to raw data, matching features by name.
Dataset apply_standardization(const Dataset& raw, const Standardization& stats);

// ---------------------------------------------------------------------------
// Synthetic families with closed-form conditional quantiles. x ~ U(-1, 1)
// and ε ~ N(0, 1):
//   linear-constant  y = 2x + 1 + σε
//   linear-linear    y = 2x + 1 + σ(x + 1.5)ε
//   quad-linear      y = 2x² − 1 + σ(x + 1.5)ε
//   sin-constant     y = sin(2πx) + σε

enum class Family { linear_constant, linear_linear, quad_linear, sin_constant };

std::string_view to_string(Family family);
// Throws a usage error listing the valid names.
Family parse_family(std::string_view text);
std::string family_list();

struct SyntheticSpec {
  Family family = Family::linear_constant;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  double sigma = 0.3;

  void validate() const;
};

double family_mean(Family family, double x);
double family_noise_scale(Family family, double x);
double standard_normal_quantile(double tau);
double oracle_quantile(Family family, double sigma, double tau, double x);

// Raw-unit dataset with one feature column "x1" and target "y".
Dataset generate(const SyntheticSpec& spec);

// Sidecar written next to a generated CSV so later evaluation can compare
// against the exact quantiles.
std::filesystem::path oracle_sidecar_path(const std::filesystem::path& csv);
void write_oracle_sidecar(const std::filesystem::path& path, const SyntheticSpec& spec);
SyntheticSpec read_oracle_sidecar(const std::filesystem::path& path);

}  // namespace ddr
