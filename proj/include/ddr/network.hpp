// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ddr/standardization.hpp"
#include "ddr/tape.hpp"
#include "ddr/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ddr {

// How τ and ỹ enter the backbone at each feature layer.
//   linear: pre += s·W + b
//   mlp:    pre += GLU(s·A + a)·W + b   (two-layer projection)
enum class InjectionMode { linear, mlp };

std::string_view to_string(InjectionMode mode);
InjectionMode parse_injection_mode(std::string_view text);

// Feature part: GLU layers (linear width 2h, gated down to h). Regression
// part: ReLU layers, then a linear output layer.
struct ArchSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> feature_widths{256, 256};
  std::vector<std::size_t> regression_widths{256};
  std::size_t output_dim = 1;
  InjectionMode injection = InjectionMode::linear;
  std::size_t projection_width = 64;
  bool quantile_head = true;
  bool cdf_head = true;

  void validate() const;
  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

enum class ParamPart { feature, regression };

struct ParamShape {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  ParamPart part;
};

// Every parameter the architecture owns, in a fixed order.
std::vector<ParamShape> parameter_layout(const ArchSpec& arch);

// Probability head output: log-odds η and F = σ(η).
struct CdfOutput {
  std::vector<double> log_odds;
  std::vector<double> probability;
};

// Numerically stable logistic function; strictly inside (0, 1) for |v| < ~36.
double sigmoid(double v) noexcept;
// F = σ(η) held strictly inside (0, 1) for every finite η: saturated values
// stop at the nearest representable neighbours of 0 and 1.
double probability(double log_odds) noexcept;

constexpr double kTauEps = 1e-4;

// Shared backbone with a τ-injected quantile head Q(τ,x) and a ỹ-injected
// log-odds head η(ỹ,x). All inputs and outputs are in standardized units;
// τ enters the network as 2τ − 1.
class DdrModel {
 public:
  // Glorot-uniform weights drawn from the "init" stream of `seed`, zero biases.
  DdrModel(ArchSpec arch, Standardization stats, std::uint64_t seed);

  static DdrModel zeros(ArchSpec arch, Standardization stats);

  const ArchSpec& arch() const noexcept { return arch_; }
  const Standardization& stats() const noexcept { return stats_; }
  Standardization& stats() noexcept { return stats_; }

  std::map<std::string, Tensor2>& parameters() noexcept { return params_; }
  const std::map<std::string, Tensor2>& parameters() const noexcept { return params_; }
  Tensor2& parameter(const std::string& name);
  const Tensor2& parameter(const std::string& name) const;

  // Quantile levels for fixed-output baselines (one per output column). Empty
  // for DDR models.
  const std::vector<double>& fixed_levels() const noexcept { return fixed_levels_; }
  void set_fixed_levels(std::vector<double> levels);

  // M(x): backbone without any injection, first output column.
  std::vector<double> median_forward(const Tensor2& x) const;
  // All output columns of the uninjected backbone.
  Tensor2 backbone_forward(const Tensor2& x) const;

  std::vector<double> q_forward(double tau, const Tensor2& x) const;
  // One τ per row.
  std::vector<double> q_forward(std::span<const double> tau, const Tensor2& x) const;
  // Same without the (0,1) range check, for τ produced by the CDF head.
  std::vector<double> q_forward_unchecked(std::span<const double> tau, const Tensor2& x) const;

  CdfOutput f_forward(double ytilde, const Tensor2& x) const;
  CdfOutput f_forward(std::span<const double> ytilde, const Tensor2& x) const;

  friend bool operator==(const DdrModel&, const DdrModel&) = default;

 private:
  DdrModel(ArchSpec arch, Standardization stats);

  enum class Injected { none, tau, ytilde };
  Tensor2 run(const Tensor2& x, Injected which, std::span<const double> scalar) const;
  void check_input(const Tensor2& x) const;

  ArchSpec arch_;
  Standardization stats_;
  std::map<std::string, Tensor2> params_;
  std::vector<double> fixed_levels_;
};

// Leaves for every model parameter on a tape, plus builders for the three
// heads. One ModelNodes per tape; heads may be instantiated any number of
// times and all share the same parameter leaves.
class ModelNodes {
 public:
  ModelNodes(Tape& tape, const ArchSpec& arch);

  void bind(Feed& feed, const DdrModel& model) const;

  NodeId median(NodeId x) const;
  // `tau` holds raw percentiles; centring happens on the tape.
  NodeId quantile(NodeId x, NodeId tau) const;
  NodeId log_odds(NodeId x, NodeId ytilde) const;

  NodeId param(const std::string& name) const;

 private:
  enum class Injected { none, tau, ytilde };
  NodeId head(NodeId x, Injected which, NodeId scalar) const;

  Tape* tape_;
  ArchSpec arch_;
  std::map<std::string, NodeId> params_;
};

// Versioned JSON model file. Loading validates the structure completely
// before returning, so a failed load never yields a partial model.
constexpr int kModelFormatVersion = 1;
void save(const DdrModel& model, const std::filesystem::path& path);
DdrModel load(const std::filesystem::path& path);
// Like load, but rejects a file whose architecture differs from `expected`.
DdrModel load(const std::filesystem::path& path, const ArchSpec& expected);
std::string to_json_text(const DdrModel& model);
DdrModel from_json_text(const std::string& text);

}  // namespace ddr
