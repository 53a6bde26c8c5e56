// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ddr/data.hpp"
#include "ddr/inference.hpp"
#include "ddr/losses.hpp"
#include "ddr/metrics.hpp"
#include "ddr/network.hpp"
#include "ddr/sampler.hpp"

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

namespace ddr {

enum class TrainMode { ddr_joint, ddr_disjoint, ddr_q, fcnn, fcnn_joint };

std::string_view to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view text);
bool is_fixed_level(TrainMode mode) noexcept;

// Loss terms each DDR mode optimizes. Fixed-level modes use none of them.
LossMask active_terms(TrainMode mode);

// Linear move from `start` to `end` over the first `ramp` fraction of steps,
// then held at `end`.
struct TermSchedule {
  double start = 0.0;
  double end = 1.0;
  double ramp = 0.0;
  friend bool operator==(const TermSchedule&, const TermSchedule&) = default;
};

struct AnnealSchedule {
  std::array<TermSchedule, kLossTermCount> terms{};

  // Median at 1 throughout; Monte Carlo and anchor terms 0 → 1 over the first
  // quarter; monotonicity, recover and dual terms 0 → 1 over the first half.
  static AnnealSchedule standard();
  // Every term at its end weight from step 0.
  AnnealSchedule flattened() const;
  // Largest ramp fraction among terms whose start and end differ.
  double ramp_end() const;
  void validate() const;

  TermSchedule& operator[](LossTerm t) noexcept { return terms[index(t)]; }
  const TermSchedule& operator[](LossTerm t) const noexcept { return terms[index(t)]; }
  friend bool operator==(const AnnealSchedule&, const AnnealSchedule&) = default;
};

LossWeights anneal_weights(const AnnealSchedule& schedule, std::size_t step, std::size_t total_steps);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Feature-part parameters update on every `feature_every`-th call,
  // regression-part parameters on every `regression_every`-th call.
  std::size_t feature_every = 1;
  std::size_t regression_every = 2;

  void validate() const;
};

// Adam with bias correction and a separate step count per parameter.
class Adam {
 public:
  explicit Adam(AdamConfig config, std::map<std::string, ParamPart> parts = {});

  // Throws a divergence error, leaving every parameter untouched, when any
  // gradient entry is non-finite.
  void step(std::map<std::string, Tensor2>& params, const GradientMap& grads);
  std::size_t calls() const noexcept { return calls_; }

 private:
  struct Moments {
    Tensor2 m;
    Tensor2 v;
    std::size_t t = 0;
  };
  AdamConfig config_;
  std::map<std::string, ParamPart> parts_;
  std::map<std::string, Moments> moments_;
  std::size_t calls_ = 0;
};

std::map<std::string, ParamPart> parameter_parts(const ArchSpec& arch);

struct TrainConfig {
  TrainMode mode = TrainMode::ddr_joint;
  std::vector<std::size_t> feature_widths{256, 256};
  std::vector<std::size_t> regression_widths{256};
  InjectionMode injection = InjectionMode::linear;
  std::size_t projection_width = 64;

  std::size_t epochs = 200;
  std::size_t batch_size = 128;
  std::size_t patience = 20;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;

  AdamConfig optimizer;
  AnnealSchedule schedule = AnnealSchedule::standard();
  LossOptions loss;

  TauPrior tau_prior = TauPrior::uniform;
  double beta_a = 1.0;
  double beta_b = 1.0;
  std::vector<double> tau_anchors{kDeciles.begin(), kDeciles.end()};
  std::vector<double> fixed_levels{kDeciles.begin(), kDeciles.end()};

  // Per-epoch crossing rate on the validation rows (101-level grid).
  bool track_crossing = false;
  // Only epochs that end after every ramp of the schedule has finished are
  // checkpoint candidates, and patience starts counting there.
  bool select_after_anneal = true;

  void validate() const;
  ArchSpec arch(std::size_t input_dim) const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  LossBreakdown train_loss;  // batch means
  double val_qs = 0.0;
  double val_mae = 0.0;
  std::optional<double> val_recover_q;
  std::optional<double> val_recover_f;
  std::optional<double> val_crossing;
  bool improved = false;

  friend bool operator==(const EpochRecord& a, const EpochRecord& b);
};

struct TrainReport {
  TrainMode mode = TrainMode::ddr_joint;
  std::uint64_t seed = 0;
  std::size_t planned_steps = 0;
  std::size_t steps_run = 0;
  bool stopped_early = false;
  std::vector<EpochRecord> epochs;
  std::size_t selected_epoch = 0;
  double selected_val_qs = 0.0;
  // Validation metrics of the selected checkpoint.
  EvalReport validation;
  // Recover errors of the initial model on the validation rows.
  std::optional<double> initial_recover_q;
  std::optional<double> initial_recover_f;
  double wall_seconds = 0.0;  // excluded from equality
};

bool same_outcome(const TrainReport& a, const TrainReport& b);

// One trainable unit per mode: a single DDR model, nine single-level nets, or
// one nine-output net.
class Trainer {
 public:
  Trainer(const TrainConfig& config, const Standardization& stats,
          std::vector<double> ytilde_anchors);
  ~Trainer();

  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  LossSamples draw_samples(std::size_t n);
  // Loss of the current parameters on the given rows; nothing is updated.
  LossBreakdown loss(const Tensor2& x, std::span<const double> y, const LossSamples& samples,
                     const LossWeights& weights);
  // Draws samples, then one optimizer step. Returns the loss before the step.
  LossBreakdown step(const Tensor2& x, std::span<const double> y, const LossWeights& weights);

  const std::vector<DdrModel>& models() const noexcept { return models_; }
  void set_models(std::vector<DdrModel> models);
  std::unique_ptr<QuantilePredictor> predictor() const;
  Sampler& sampler() noexcept { return sampler_; }

 private:
  struct Unit;
  TrainConfig config_;
  Sampler sampler_;
  std::vector<DdrModel> models_;
  std::vector<std::unique_ptr<Unit>> units_;
};

struct TrainResult {
  std::vector<DdrModel> models;
  TrainReport report;
};

// Split and standardize raw data for training.
Dataset prepare_dataset(const Dataset& raw, double validation_fraction, std::uint64_t seed);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains on the training rows of a standardized dataset, selecting the epoch
// with the lowest validation q_s.
TrainResult train(const Dataset& data, const TrainConfig& config, const EpochCallback& on_epoch = {});

nlohmann::json to_json(const TrainReport& report);
std::string epochs_csv(const TrainReport& report);

}  // namespace ddr
