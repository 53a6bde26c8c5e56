// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ddr/heads.hpp"
#include "ddr/network.hpp"
#include "ddr/tape.hpp"

#include <array>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace ddr {

enum class LossTerm : std::size_t {
  pinball_mc,
  pinball_anchor,
  cdf_nll_mc,
  cdf_nll_anchor,
  grad_q,
  grad_f,
  recover_q,
  recover_f,
  dual_q,
  dual_f,
  median,
};

constexpr std::size_t kLossTermCount = 11;
constexpr std::array<LossTerm, kLossTermCount> kAllLossTerms{
    LossTerm::pinball_mc, LossTerm::pinball_anchor, LossTerm::cdf_nll_mc,
    LossTerm::cdf_nll_anchor, LossTerm::grad_q, LossTerm::grad_f,
    LossTerm::recover_q, LossTerm::recover_f, LossTerm::dual_q,
    LossTerm::dual_f, LossTerm::median};

std::string_view to_string(LossTerm term);
LossTerm parse_loss_term(std::string_view text);

using LossWeights = std::array<double, kLossTermCount>;
using LossMask = std::array<bool, kLossTermCount>;

constexpr std::size_t index(LossTerm t) noexcept { return static_cast<std::size_t>(t); }

LossWeights uniform_weights(double value = 1.0);

struct LossBreakdown {
  std::array<double, kLossTermCount> component{};
  double total = 0.0;

  double operator[](LossTerm t) const noexcept { return component[index(t)]; }
  double& operator[](LossTerm t) noexcept { return component[index(t)]; }
};

// ℓ_τ(y − ŷ) = τ·max(y − ŷ, 0) + (1 − τ)·max(ŷ − y, 0).
double pinball(double tau, double y, double y_pred) noexcept;

// −I·η + ln(1 + e^η) in the overflow-safe form max(η,0) − I·η + ln(1 + e^−|η|).
double cdf_nll(double indicator, double log_odds) noexcept;

// Centre of a central-difference probe: τ moved inward so that τ ± ε stays
// inside (0, 1) with kTauEps to spare.
double probe_centre(double tau, double eps) noexcept;

struct LossOptions {
  double eps_tau = 1e-2;
  double eps_ytilde = 1e-2;
};

// Per-example random draws feeding one loss evaluation.
struct LossSamples {
  std::vector<double> tau;
  std::vector<double> tau_anchor;
  std::vector<double> ytilde;
  std::vector<double> ytilde_anchor;
};

// ---------------------------------------------------------------------------
// Value-level loss terms over any DistributionHeads. Sums and means are over
// the rows of x.

double pinball_mc(const DistributionHeads& heads, const Tensor2& x, std::span<const double> y,
                  std::span<const double> tau);
double cdf_nll_mc(const DistributionHeads& heads, const Tensor2& x, std::span<const double> y,
                  std::span<const double> ytilde);
double median_loss(const DistributionHeads& heads, const Tensor2& x, std::span<const double> y);

// Σ_i max(−D_τ Q(τ_i, x_i), 0) with D_τ the central difference of step eps.
double grad_penalty_q(const DistributionHeads& heads, std::span<const double> tau,
                      const Tensor2& x, double eps);
// Σ_i max(−D_ỹ F(ỹ_i, x_i), 0) on the probability output.
double grad_penalty_f(const DistributionHeads& heads, std::span<const double> ytilde,
                      const Tensor2& x, double eps);

struct PairedLoss {
  double q = 0.0;
  double f = 0.0;
};

// Means of |τ − F(Q(τ,x),x)| and |ỹ − Q(F(ỹ,x),x)|.
PairedLoss recover_losses(const DistributionHeads& heads, std::span<const double> tau,
                          std::span<const double> ytilde, const Tensor2& x);
// Sums of the monotonicity penalty through Q∘F∘Q (in τ) and F∘Q∘F (in ỹ).
PairedLoss dual_losses(const DistributionHeads& heads, std::span<const double> tau,
                       std::span<const double> ytilde, const Tensor2& x, double eps_tau,
                       double eps_ytilde);

// Every term on the same batch; terms outside `active` are reported as 0.
LossBreakdown total_loss(const DistributionHeads& heads, const Tensor2& x,
                         std::span<const double> y, const LossSamples& samples,
                         const LossWeights& weights, const LossMask& active,
                         const LossOptions& options = {});

// ---------------------------------------------------------------------------
// Differentiable evaluation on a static tape, built once per architecture and
// set of active terms.

class LossGraph {
 public:
  LossGraph(const ArchSpec& arch, const LossMask& active, LossOptions options = {});

  LossGraph(const LossGraph&) = delete;
  LossGraph& operator=(const LossGraph&) = delete;

  LossBreakdown evaluate(const DdrModel& model, const Tensor2& x, std::span<const double> y,
                         const LossSamples& samples, const LossWeights& weights);
  // Forward plus backward of the weighted total.
  std::pair<LossBreakdown, GradientMap> gradient(const DdrModel& model, const Tensor2& x,
                                                 std::span<const double> y,
                                                 const LossSamples& samples,
                                                 const LossWeights& weights);

  const LossMask& active() const noexcept { return active_; }
  Tape& tape() noexcept { return tape_; }

 private:
  LossBreakdown run(const DdrModel& model, const Tensor2& x, std::span<const double> y,
                    const LossSamples& samples, const LossWeights& weights);

  Tape tape_;
  ModelNodes nodes_;
  LossMask active_;
  LossOptions options_;
  std::array<NodeId, kLossTermCount> component_nodes_{};
  NodeId total_;

  // Input storage bound to the tape leaves.
  Tensor2 y_, tau_, tau_anchor_, ytilde_, ytilde_anchor_, ind_mc_, ind_anchor_;
  Tensor2 tau_hi_, tau_lo_, ytilde_hi_, ytilde_lo_;
  std::array<Tensor2, kLossTermCount> weights_;
};

// Summed fixed-level pinball for baselines: Σ_c mean_r ℓ_{τ_c}(y_r − out_rc),
// one output column per level.
class FixedQuantileLoss {
 public:
  FixedQuantileLoss(const ArchSpec& arch, std::vector<double> levels);

  FixedQuantileLoss(const FixedQuantileLoss&) = delete;
  FixedQuantileLoss& operator=(const FixedQuantileLoss&) = delete;

  double evaluate(const DdrModel& model, const Tensor2& x, std::span<const double> y);
  std::pair<double, GradientMap> gradient(const DdrModel& model, const Tensor2& x,
                                          std::span<const double> y);

  Tape& tape() noexcept { return tape_; }

 private:
  void prepare(std::span<const double> y, std::size_t rows);

  Tape tape_;
  ModelNodes nodes_;
  std::vector<double> levels_;
  Tensor2 y_, tau_, inv_rows_;
};

}  // namespace ddr
