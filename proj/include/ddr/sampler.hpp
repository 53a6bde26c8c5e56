// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ddr/rng.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace ddr {

constexpr std::array<double, 9> kDeciles{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

enum class TauPrior { uniform, beta };

std::string_view to_string(TauPrior prior);
TauPrior parse_tau_prior(std::string_view text);

struct SamplerConfig {
  std::uint64_t seed = 0;
  std::size_t batch_size = 128;
  TauPrior tau_prior = TauPrior::uniform;
  double beta_a = 1.0;
  double beta_b = 1.0;
  // Draws are clipped to [tau_clip, 1 - tau_clip].
  double tau_clip = 1e-4;
  // Empirical target bounds from the training split, standardized units.
  std::optional<double> ytilde_min;
  std::optional<double> ytilde_max;
  std::vector<double> tau_anchors{kDeciles.begin(), kDeciles.end()};
  std::vector<double> ytilde_anchors;

  void validate() const;
};

// Seeded source of every random draw a training run makes. Each kind of draw
// has its own stream.
class Sampler {
 public:
  explicit Sampler(SamplerConfig config);

  const SamplerConfig& config() const noexcept { return config_; }

  std::vector<double> sample_tau(std::size_t n);
  std::vector<double> sample_ytilde(std::size_t n);
  // One anchor per example, drawn uniformly from the configured set.
  std::vector<double> pick_tau_anchors(std::size_t n);
  std::vector<double> pick_ytilde_anchors(std::size_t n);

  // Row indices of one epoch: a fresh permutation cut into batches of
  // batch_size, the last one possibly shorter.
  std::vector<std::vector<std::size_t>> epoch_batches(std::size_t rows);

 private:
  double draw_tau();

  SamplerConfig config_;
  RngStream tau_;
  RngStream ytilde_;
  RngStream anchor_;
  RngStream shuffle_;
  std::gamma_distribution<double> gamma_a_;
  std::gamma_distribution<double> gamma_b_;
};

// Empirical quantile by linear interpolation between order statistics.
double empirical_quantile(std::span<const double> values, double tau);
std::vector<double> empirical_deciles(std::span<const double> values);

}  // namespace ddr
