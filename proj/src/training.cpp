// SPDX-License-Identifier: Apache-2.0

#include "ddr/training.hpp"

#include "ddr/error.hpp"
#include "ddr/rng.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace ddr {

namespace {

bool opt_equal(const std::optional<double>& a, const std::optional<double>& b) {
  return a.has_value() == b.has_value() && (!a || *a == *b);
}

}  // namespace

std::string_view to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::ddr_joint: return "ddr-joint";
    case TrainMode::ddr_disjoint: return "ddr-disjoint";
    case TrainMode::ddr_q: return "ddr-q";
    case TrainMode::fcnn: return "fcnn";
    case TrainMode::fcnn_joint: return "fcnn-joint";
  }
  return "unknown";
}

TrainMode parse_train_mode(std::string_view text) {
  for (auto m : {TrainMode::ddr_joint, TrainMode::ddr_disjoint, TrainMode::ddr_q, TrainMode::fcnn,
                 TrainMode::fcnn_joint}) {
    if (text == to_string(m)) return m;
  }
  throw Error(ErrorCode::usage,
              "unknown mode '" + std::string(text) +
                  "'; choose one of: ddr-joint, ddr-disjoint, ddr-q, fcnn, fcnn-joint");
}

bool is_fixed_level(TrainMode mode) noexcept {
  return mode == TrainMode::fcnn || mode == TrainMode::fcnn_joint;
}

LossMask active_terms(TrainMode mode) {
  LossMask m{};
  auto on = [&](std::initializer_list<LossTerm> terms) {
    for (LossTerm t : terms) m[index(t)] = true;
  };
  switch (mode) {
    case TrainMode::ddr_joint:
      on({LossTerm::recover_q, LossTerm::recover_f, LossTerm::dual_q, LossTerm::dual_f});
      [[fallthrough]];
    case TrainMode::ddr_disjoint:
      on({LossTerm::cdf_nll_mc, LossTerm::cdf_nll_anchor, LossTerm::grad_f});
      [[fallthrough]];
    case TrainMode::ddr_q:
      on({LossTerm::pinball_mc, LossTerm::pinball_anchor, LossTerm::grad_q, LossTerm::median});
      break;
    case TrainMode::fcnn:
    case TrainMode::fcnn_joint: break;
  }
  return m;
}

AnnealSchedule AnnealSchedule::standard() {
  AnnealSchedule s;
  for (LossTerm t : kAllLossTerms) s[t] = {0.0, 1.0, 0.5};
  for (LossTerm t : {LossTerm::pinball_mc, LossTerm::pinball_anchor, LossTerm::cdf_nll_mc,
                     LossTerm::cdf_nll_anchor}) {
    s[t].ramp = 0.25;
  }
  s[LossTerm::median] = {1.0, 1.0, 0.0};
  return s;
}

AnnealSchedule AnnealSchedule::flattened() const {
  AnnealSchedule s = *this;
  for (auto& t : s.terms) {
    t.start = t.end;
    t.ramp = 0.0;
  }
  return s;
}

double AnnealSchedule::ramp_end() const {
  double r = 0.0;
  for (const auto& t : terms) {
    if (t.start != t.end) r = std::max(r, t.ramp);
  }
  return r;
}

void AnnealSchedule::validate() const {
  for (std::size_t i = 0; i < kLossTermCount; ++i) {
    const auto& t = terms[i];
    const std::string name(to_string(kAllLossTerms[i]));
    if (!(t.start >= 0.0 && t.end >= 0.0) || !std::isfinite(t.start) || !std::isfinite(t.end)) {
      throw Error(ErrorCode::invalid_argument, "schedule: weights for " + name + " must be >= 0");
    }
    if (!(t.ramp >= 0.0 && t.ramp <= 1.0)) {
      throw Error(ErrorCode::invalid_argument, "schedule: ramp for " + name + " must lie in [0, 1]");
    }
  }
  const auto& m = (*this)[LossTerm::median];
  if (m.ramp > 0.0 && m.start < m.end) {
    throw Error(ErrorCode::invalid_argument,
                "schedule: the median weight may not start below its end value");
  }
}

LossWeights anneal_weights(const AnnealSchedule& schedule, std::size_t step,
                           std::size_t total_steps) {
  if (total_steps == 0 || step > total_steps) {
    throw Error(ErrorCode::invalid_argument, "anneal_weights: need 0 <= step <= total_steps, total > 0");
  }
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  LossWeights w{};
  for (std::size_t i = 0; i < kLossTermCount; ++i) {
    const auto& t = schedule.terms[i];
    if (t.ramp <= 0.0 || progress >= t.ramp) {
      w[i] = t.end;
    } else {
      w[i] = t.start + (t.end - t.start) * (progress / t.ramp);
    }
  }
  return w;
}

void AdamConfig::validate() const {
  if (!(lr > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) ||
      !(eps > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "optimizer: invalid Adam hyper-parameters");
  }
  if (feature_every == 0 || regression_every == 0) {
    throw Error(ErrorCode::invalid_argument, "optimizer: update periods must be >= 1");
  }
}

Adam::Adam(AdamConfig config, std::map<std::string, ParamPart> parts)
    : config_(config), parts_(std::move(parts)) {
  config_.validate();
}

void Adam::step(std::map<std::string, Tensor2>& params, const GradientMap& grads) {
  for (const auto& [name, g] : grads) {
    const auto it = params.find(name);
    if (it == params.end()) {
      throw Error(ErrorCode::invalid_argument, "optimizer: gradient for unknown parameter '" + name + "'");
    }
    if (it->second.rows() != g.rows() || it->second.cols() != g.cols()) {
      throw Error(ErrorCode::shape_mismatch, "optimizer: gradient shape differs for '" + name + "'");
    }
    if (!g.all_finite()) {
      throw Error(ErrorCode::divergence, "optimizer: non-finite gradient for '" + name + "'");
    }
  }
  const std::size_t call = calls_++;
  for (const auto& [name, g] : grads) {
    const auto part_it = parts_.find(name);
    const ParamPart part = part_it == parts_.end() ? ParamPart::feature : part_it->second;
    const std::size_t period =
        part == ParamPart::feature ? config_.feature_every : config_.regression_every;
    if (call % period != 0) continue;

    Tensor2& p = params.at(name);
    Moments& mo = moments_[name];
    if (mo.t == 0) {
      mo.m = Tensor2(g.rows(), g.cols());
      mo.v = Tensor2(g.rows(), g.cols());
    }
    ++mo.t;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(mo.t));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(mo.t));
    for (std::size_t i = 0; i < g.size(); ++i) {
      mo.m[i] = config_.beta1 * mo.m[i] + (1.0 - config_.beta1) * g[i];
      mo.v[i] = config_.beta2 * mo.v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double m_hat = mo.m[i] / c1;
      const double v_hat = mo.v[i] / c2;
      p[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

std::map<std::string, ParamPart> parameter_parts(const ArchSpec& arch) {
  std::map<std::string, ParamPart> parts;
  for (const auto& p : parameter_layout(arch)) parts.emplace(p.name, p.part);
  return parts;
}

void TrainConfig::validate() const {
  if (epochs == 0) throw Error(ErrorCode::invalid_argument, "train: epochs must be >= 1");
  if (batch_size == 0) throw Error(ErrorCode::invalid_argument, "train: batch size must be >= 1");
  if (!(validation_fraction > 0.0 && validation_fraction <= 0.5)) {
    throw Error(ErrorCode::invalid_argument, "train: validation fraction must lie in (0, 0.5]");
  }
  optimizer.validate();
  schedule.validate();
  if (!(loss.eps_tau > 0.0 && loss.eps_ytilde > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "train: finite-difference steps must be positive");
  }
  if (is_fixed_level(mode) && fixed_levels.empty()) {
    throw Error(ErrorCode::invalid_argument, "train: fixed-level modes need at least one level");
  }
  for (double t : fixed_levels) {
    if (!(t > 0.0 && t < 1.0)) {
      throw Error(ErrorCode::invalid_argument, "train: fixed levels must lie in (0, 1)");
    }
  }
  arch(1).validate();
}

ArchSpec TrainConfig::arch(std::size_t input_dim) const {
  ArchSpec a;
  a.input_dim = input_dim;
  a.feature_widths = feature_widths;
  a.regression_widths = regression_widths;
  a.injection = injection;
  a.projection_width = projection_width;
  a.quantile_head = !is_fixed_level(mode);
  a.cdf_head = mode == TrainMode::ddr_joint || mode == TrainMode::ddr_disjoint;
  a.output_dim = mode == TrainMode::fcnn_joint ? fixed_levels.size() : 1;
  return a;
}

bool operator==(const EpochRecord& a, const EpochRecord& b) {
  return a.epoch == b.epoch && a.steps == b.steps && a.train_loss.component == b.train_loss.component &&
         a.train_loss.total == b.train_loss.total && a.val_qs == b.val_qs &&
         a.val_mae == b.val_mae && opt_equal(a.val_recover_q, b.val_recover_q) &&
         opt_equal(a.val_recover_f, b.val_recover_f) && opt_equal(a.val_crossing, b.val_crossing) &&
         a.improved == b.improved;
}

bool same_outcome(const TrainReport& a, const TrainReport& b) {
  return a.mode == b.mode && a.seed == b.seed && a.planned_steps == b.planned_steps &&
         a.steps_run == b.steps_run && a.stopped_early == b.stopped_early && a.epochs == b.epochs &&
         a.selected_epoch == b.selected_epoch && a.selected_val_qs == b.selected_val_qs &&
         a.validation == b.validation && opt_equal(a.initial_recover_q, b.initial_recover_q) &&
         opt_equal(a.initial_recover_f, b.initial_recover_f);
}

// ---------------------------------------------------------------------------

struct Trainer::Unit {
  std::unique_ptr<LossGraph> graph;
  std::unique_ptr<FixedQuantileLoss> fixed;
  Adam adam;
};

namespace {

SamplerConfig sampler_config(const TrainConfig& c, const Standardization& stats,
                             std::vector<double> ytilde_anchors) {
  SamplerConfig s;
  s.seed = c.seed;
  s.batch_size = c.batch_size;
  s.tau_prior = c.tau_prior;
  s.beta_a = c.beta_a;
  s.beta_b = c.beta_b;
  s.tau_clip = kTauEps;
  s.ytilde_min = stats.ytilde_min;
  s.ytilde_max = stats.ytilde_max;
  s.tau_anchors = c.tau_anchors;
  s.ytilde_anchors = std::move(ytilde_anchors);
  return s;
}

void check_finite(const LossBreakdown& b, const char* where) {
  if (std::isfinite(b.total)) return;
  std::string bad;
  for (std::size_t i = 0; i < kLossTermCount; ++i) {
    if (!std::isfinite(b.component[i])) bad += (bad.empty() ? "" : ", ") + std::string(to_string(kAllLossTerms[i]));
  }
  throw Error(ErrorCode::divergence, std::string(where) + ": non-finite loss" +
                                         (bad.empty() ? std::string() : " in " + bad));
}

}  // namespace

Trainer::Trainer(const TrainConfig& config, const Standardization& stats,
                 std::vector<double> ytilde_anchors)
    : config_(config), sampler_(sampler_config(config, stats, std::move(ytilde_anchors))) {
  config_.validate();
  const ArchSpec arch = config_.arch(stats.input_dim());
  const auto parts = parameter_parts(arch);
  if (config_.mode == TrainMode::fcnn) {
    for (std::size_t i = 0; i < config_.fixed_levels.size(); ++i) {
      DdrModel m(arch, stats, mix_seed(config_.seed, "net" + std::to_string(i)));
      m.set_fixed_levels({config_.fixed_levels[i]});
      models_.push_back(std::move(m));
      units_.push_back(std::make_unique<Unit>(Unit{
          nullptr, std::make_unique<FixedQuantileLoss>(arch, models_.back().fixed_levels()),
          Adam(config_.optimizer, parts)}));
    }
    return;
  }
  models_.emplace_back(arch, stats, config_.seed);
  if (config_.mode == TrainMode::fcnn_joint) {
    models_.back().set_fixed_levels(config_.fixed_levels);
    units_.push_back(std::make_unique<Unit>(
        Unit{nullptr, std::make_unique<FixedQuantileLoss>(arch, config_.fixed_levels),
             Adam(config_.optimizer, parts)}));
  } else {
    units_.push_back(std::make_unique<Unit>(
        Unit{std::make_unique<LossGraph>(arch, active_terms(config_.mode), config_.loss), nullptr,
             Adam(config_.optimizer, parts)}));
  }
}

Trainer::~Trainer() = default;

LossSamples Trainer::draw_samples(std::size_t n) {
  LossSamples s;
  if (is_fixed_level(config_.mode)) return s;
  const LossMask m = active_terms(config_.mode);
  auto on = [&](LossTerm t) { return m[index(t)]; };
  s.tau = sampler_.sample_tau(n);
  s.tau_anchor = sampler_.pick_tau_anchors(n);
  if (on(LossTerm::cdf_nll_mc)) s.ytilde = sampler_.sample_ytilde(n);
  if (on(LossTerm::cdf_nll_anchor)) s.ytilde_anchor = sampler_.pick_ytilde_anchors(n);
  return s;
}

LossBreakdown Trainer::loss(const Tensor2& x, std::span<const double> y, const LossSamples& samples,
                            const LossWeights& weights) {
  LossBreakdown b;
  if (units_.front()->graph) return units_.front()->graph->evaluate(models_.front(), x, y, samples, weights);
  for (std::size_t i = 0; i < units_.size(); ++i) b.total += units_[i]->fixed->evaluate(models_[i], x, y);
  b[LossTerm::pinball_anchor] = b.total;
  return b;
}

LossBreakdown Trainer::step(const Tensor2& x, std::span<const double> y, const LossWeights& weights) {
  LossBreakdown b;
  if (units_.front()->graph) {
    const LossSamples s = draw_samples(x.rows());
    auto [value, grads] = units_.front()->graph->gradient(models_.front(), x, y, s, weights);
    check_finite(value, "training step");
    units_.front()->adam.step(models_.front().parameters(), grads);
    return value;
  }
  for (std::size_t i = 0; i < units_.size(); ++i) {
    auto [value, grads] = units_[i]->fixed->gradient(models_[i], x, y);
    b.total += value;
    units_[i]->adam.step(models_[i].parameters(), grads);
  }
  b[LossTerm::pinball_anchor] = b.total;
  check_finite(b, "training step");
  return b;
}

void Trainer::set_models(std::vector<DdrModel> models) {
  if (models.size() != models_.size()) {
    throw Error(ErrorCode::incompatible, "trainer: model count differs");
  }
  models_ = std::move(models);
}

std::unique_ptr<QuantilePredictor> Trainer::predictor() const {
  if (is_fixed_level(config_.mode)) {
    std::vector<const DdrModel*> ptrs;
    for (const auto& m : models_) ptrs.push_back(&m);
    return std::make_unique<FixedLevelPredictor>(std::move(ptrs));
  }
  return std::make_unique<ModelPredictor>(models_.front(), InferenceMode::q_only);
}

// ---------------------------------------------------------------------------

Dataset prepare_dataset(const Dataset& raw, double validation_fraction, std::uint64_t seed) {
  Dataset d = raw;
  assign_split(d, validation_fraction, seed);
  return standardize(d);
}

namespace {

std::pair<double, double> recover_errors(const DdrModel& model, const Tensor2& x,
                                         std::span<const double> y) {
  const ModelHeads heads(model);
  const ModelPredictor direct(model, InferenceMode::q_only);
  EvalOptions opt;
  opt.crossing = false;
  opt.mean = false;
  opt.coverage_levels.clear();
  const EvalReport r = evaluate(direct, &heads, x, y, opt);
  return {*r.recover_q, *r.recover_f};
}

}  // namespace

TrainResult train(const Dataset& data, const TrainConfig& config, const EpochCallback& on_epoch) {
  const auto started = std::chrono::steady_clock::now();
  config.validate();
  data.validate();
  if (!data.stats) throw Error(ErrorCode::bad_state, "train: dataset is not standardized");
  const Dataset train_set = data.subset(Split::train);
  const Dataset val_set = data.subset(Split::validation);
  if (train_set.rows() == 0 || val_set.rows() == 0) {
    throw Error(ErrorCode::invalid_argument, "train: need nonempty training and validation rows");
  }

  Trainer trainer(config, *data.stats, empirical_deciles(train_set.y));
  const bool ddr = !is_fixed_level(config.mode);
  const bool has_cdf = config.mode == TrainMode::ddr_joint || config.mode == TrainMode::ddr_disjoint;

  const std::size_t batches_per_epoch = (train_set.rows() + config.batch_size - 1) / config.batch_size;
  TrainReport report;
  report.mode = config.mode;
  report.seed = config.seed;
  report.planned_steps = config.epochs * batches_per_epoch;
  if (has_cdf) {
    const auto [rq, rf] = recover_errors(trainer.models().front(), val_set.x, val_set.y);
    report.initial_recover_q = rq;
    report.initial_recover_f = rf;
  }

  std::vector<DdrModel> best = trainer.models();
  double best_qs = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::size_t step = 0;
  const std::vector<double> grid = crossing_grid();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    const auto batches = trainer.sampler().epoch_batches(train_set.rows());
    for (const auto& rows : batches) {
      const Tensor2 xb = train_set.x.gather_rows(rows);
      std::vector<double> yb(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) yb[i] = train_set.y[rows[i]];
      const LossWeights w = ddr ? anneal_weights(config.schedule, step, report.planned_steps)
                                : LossWeights{};
      LossBreakdown b;
      try {
        b = trainer.step(xb, yb, w);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::divergence) throw;
        throw Error(ErrorCode::divergence, std::string(e.what()) + " (epoch " +
                                               std::to_string(epoch) + ", step " +
                                               std::to_string(step) + ")");
      }
      for (std::size_t i = 0; i < kLossTermCount; ++i) rec.train_loss.component[i] += b.component[i];
      rec.train_loss.total += b.total;
      ++step;
    }
    const double nb = static_cast<double>(batches.size());
    for (double& c : rec.train_loss.component) c /= nb;
    rec.train_loss.total /= nb;
    rec.steps = step;

    const auto predictor = trainer.predictor();
    rec.val_qs = qs_score(*predictor, val_set.x, val_set.y).total;
    rec.val_mae = mae(predict_median(*predictor, val_set.x), val_set.y);
    if (has_cdf) {
      const auto [rq, rf] = recover_errors(trainer.models().front(), val_set.x, val_set.y);
      rec.val_recover_q = rq;
      rec.val_recover_f = rf;
    }
    if (config.track_crossing && ddr) rec.val_crossing = crossing_rate(*predictor, val_set.x, grid);
    if (!std::isfinite(rec.val_qs)) {
      throw Error(ErrorCode::divergence, "validation score is non-finite at epoch " + std::to_string(epoch));
    }
    const bool candidate =
        !ddr || !config.select_after_anneal ||
        static_cast<double>(step) >= config.schedule.ramp_end() * static_cast<double>(report.planned_steps) ||
        epoch == config.epochs;
    if (!candidate) {
      report.epochs.push_back(rec);
      if (on_epoch) on_epoch(rec);
      continue;
    }
    if (rec.val_qs < best_qs) {
      best_qs = rec.val_qs;
      best = trainer.models();
      report.selected_epoch = epoch;
      since_best = 0;
      rec.improved = true;
    } else {
      ++since_best;
    }
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (config.patience > 0 && since_best >= config.patience) {
      report.stopped_early = epoch < config.epochs;
      break;
    }
  }
  report.steps_run = step;
  report.selected_val_qs = best_qs;

  trainer.set_models(best);
  {
    const auto predictor = trainer.predictor();
    std::optional<ModelHeads> heads;
    if (has_cdf) heads.emplace(trainer.models().front());
    report.validation = evaluate(*predictor, heads ? &*heads : nullptr, val_set.x, val_set.y);
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return {std::move(best), std::move(report)};
}

nlohmann::json to_json(const TrainReport& r) {
  nlohmann::json j;
  j["mode"] = std::string(to_string(r.mode));
  j["seed"] = r.seed;
  j["planned_steps"] = r.planned_steps;
  j["steps_run"] = r.steps_run;
  j["stopped_early"] = r.stopped_early;
  j["selected_epoch"] = r.selected_epoch;
  j["selected_val_q_s"] = r.selected_val_qs;
  if (r.initial_recover_q) j["initial_recover_q"] = *r.initial_recover_q;
  if (r.initial_recover_f) j["initial_recover_f"] = *r.initial_recover_f;
  j["validation"] = to_json(r.validation);
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs) {
    nlohmann::json je;
    je["epoch"] = e.epoch;
    je["steps"] = e.steps;
    nlohmann::json loss;
    for (LossTerm t : kAllLossTerms) loss[std::string(to_string(t))] = e.train_loss[t];
    loss["total"] = e.train_loss.total;
    je["train_loss"] = loss;
    je["val_q_s"] = e.val_qs;
    je["val_mae"] = e.val_mae;
    if (e.val_recover_q) je["val_recover_q"] = *e.val_recover_q;
    if (e.val_recover_f) je["val_recover_f"] = *e.val_recover_f;
    if (e.val_crossing) je["val_crossing"] = *e.val_crossing;
    je["improved"] = e.improved;
    epochs.push_back(je);
  }
  j["epochs"] = epochs;
  j["wall_seconds"] = r.wall_seconds;
  return j;
}

std::string epochs_csv(const TrainReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  std::ostringstream os;
  os << "epoch,steps,train_total";
  for (LossTerm t : kAllLossTerms) os << ',' << to_string(t);
  os << ",val_q_s,val_mae,val_recover_q,val_recover_f,val_crossing,improved\n";
  for (const auto& e : r.epochs) {
    os << e.epoch << ',' << e.steps << ',' << format_double(e.train_loss.total);
    for (double c : e.train_loss.component) os << ',' << format_double(c);
    os << ',' << format_double(e.val_qs) << ',' << format_double(e.val_mae) << ','
       << opt(e.val_recover_q) << ',' << opt(e.val_recover_f) << ',' << opt(e.val_crossing) << ','
       << (e.improved ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace ddr
