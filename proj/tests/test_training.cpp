// SPDX-License-Identifier: Apache-2.0

#include "ddr/data.hpp"
#include "ddr/error.hpp"
#include "ddr/training.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace ddr;
using namespace ddr::test;

namespace {

TrainConfig small_config(TrainMode mode, std::uint64_t seed = 0) {
  TrainConfig c;
  c.mode = mode;
  c.feature_widths = {16, 16};
  c.regression_widths = {16};
  c.epochs = 6;
  c.batch_size = 64;
  c.patience = 0;
  c.seed = seed;
  return c;
}

Dataset small_data(std::size_t n, std::uint64_t seed = 1, Family f = Family::linear_constant) {
  return prepare_dataset(generate({f, n, seed, 0.3}), 0.2, seed);
}

}  // namespace

TEST_CASE("anneal schedule examples") {
  const AnnealSchedule s = AnnealSchedule::standard();
  const LossWeights w0 = anneal_weights(s, 0, 800);
  for (LossTerm t : kAllLossTerms) CHECK(w0[index(t)] == (t == LossTerm::median ? 1.0 : 0.0));

  const LossWeights end = anneal_weights(s, 800, 800);
  for (LossTerm t : kAllLossTerms) CHECK(end[index(t)] == 1.0);

  // An eighth of the way in: the quarter-ramp terms are halfway, the half-ramp terms a quarter.
  const LossWeights w = anneal_weights(s, 100, 800);
  CHECK(w[index(LossTerm::pinball_mc)] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(w[index(LossTerm::cdf_nll_anchor)] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(w[index(LossTerm::grad_q)] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(w[index(LossTerm::median)] == 1.0);
  CHECK(anneal_weights(s, 400, 800)[index(LossTerm::dual_f)] == 1.0);
  CHECK(s.ramp_end() == 0.5);

  const AnnealSchedule flat = s.flattened();
  CHECK(anneal_weights(flat, 0, 10) == anneal_weights(flat, 10, 10));
  CHECK(flat.ramp_end() == 0.0);

  CHECK_THROWS_AS(anneal_weights(s, 11, 10), Error);
  AnnealSchedule bad = s;
  bad[LossTerm::grad_f].ramp = 1.5;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("Adam: zero gradient, descent direction, quadratic bowl") {
  std::map<std::string, Tensor2> p;
  p.emplace("w", Tensor2(1, 2));
  p.at("w")[0] = 1.0;
  p.at("w")[1] = -1.0;
  Adam zero({});
  GradientMap g;
  g.emplace("w", Tensor2(1, 2));
  zero.step(p, g);
  CHECK(p.at("w")[0] == 1.0);
  CHECK(p.at("w")[1] == -1.0);

  Adam one({});
  g.at("w")[0] = 2.0;
  g.at("w")[1] = -0.5;
  one.step(p, g);
  // The first bias-corrected step moves each entry by lr against the gradient's sign.
  CHECK(p.at("w")[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-9));
  CHECK(p.at("w")[1] == doctest::Approx(-1.0 + 1e-3).epsilon(1e-9));

  AdamConfig cfg;
  cfg.lr = 0.05;
  Adam bowl(cfg);
  std::map<std::string, Tensor2> q;
  q.emplace("w", Tensor2(1, 1));
  for (int i = 0; i < 500; ++i) {
    GradientMap gq;
    gq.emplace("w", Tensor2(1, 1));
    gq.at("w")[0] = 2.0 * (q.at("w")[0] - 3.0);
    bowl.step(q, gq);
  }
  CHECK(std::abs(q.at("w")[0] - 3.0) < 0.01);
}

TEST_CASE("Adam: non-finite gradients leave parameters untouched") {
  std::map<std::string, Tensor2> p;
  p.emplace("a", Tensor2(1, 1));
  p.emplace("b", Tensor2(1, 1));
  GradientMap g;
  g.emplace("a", Tensor2(1, 1));
  g.emplace("b", Tensor2(1, 1));
  g.at("a")[0] = 1.0;
  g.at("b")[0] = std::nan("");
  Adam adam({});
  try {
    adam.step(p, g);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::divergence);
  }
  CHECK(p.at("a")[0] == 0.0);
  CHECK(adam.calls() == 0);
}

TEST_CASE("Adam: regression parameters update on every second call") {
  std::map<std::string, Tensor2> p;
  p.emplace("f", Tensor2(1, 1));
  p.emplace("r", Tensor2(1, 1));
  Adam adam({}, {{"f", ParamPart::feature}, {"r", ParamPart::regression}});
  GradientMap g;
  g.emplace("f", Tensor2(1, 1));
  g.emplace("r", Tensor2(1, 1));
  g.at("f")[0] = 1.0;
  g.at("r")[0] = 1.0;
  std::vector<double> f_hist, r_hist;
  for (int i = 0; i < 4; ++i) {
    adam.step(p, g);
    f_hist.push_back(p.at("f")[0]);
    r_hist.push_back(p.at("r")[0]);
  }
  CHECK(f_hist[0] < 0.0);
  CHECK(f_hist[1] < f_hist[0]);
  CHECK(r_hist[0] < 0.0);
  CHECK(r_hist[1] == r_hist[0]);
  CHECK(r_hist[2] < r_hist[1]);
  CHECK(r_hist[3] == r_hist[2]);

  const auto parts = parameter_parts(small_arch());
  CHECK(parts.at("feature0.weight") == ParamPart::feature);
  CHECK(parts.at("output.bias") == ParamPart::regression);
}

TEST_CASE("active terms per mode") {
  auto count = [](const LossMask& m) {
    std::size_t n = 0;
    for (bool b : m) n += b ? 1 : 0;
    return n;
  };
  const LossMask q = active_terms(TrainMode::ddr_q);
  CHECK(count(q) == 4);
  CHECK(q[index(LossTerm::median)]);
  CHECK_FALSE(q[index(LossTerm::cdf_nll_mc)]);
  const LossMask dis = active_terms(TrainMode::ddr_disjoint);
  CHECK(count(dis) == 7);
  CHECK_FALSE(dis[index(LossTerm::recover_q)]);
  CHECK(count(active_terms(TrainMode::ddr_joint)) == kLossTermCount);
  CHECK(count(active_terms(TrainMode::fcnn)) == 0);
  CHECK(parse_train_mode("ddr-disjoint") == TrainMode::ddr_disjoint);
  CHECK(to_string(TrainMode::fcnn_joint) == "fcnn-joint");
  try {
    parse_train_mode("ddr");
    FAIL("expected a usage error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::usage);
    CHECK(std::string(e.what()).find("ddr-joint") != std::string::npos);
  }
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.validation_fraction = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.optimizer.lr = -1.0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("smoke: total loss halves on 32 rows within 100 steps") {
  const Dataset d = small_data(40, 2);
  const Dataset tr = d.subset(Split::train);
  REQUIRE(tr.rows() == 32);
  for (TrainMode mode : {TrainMode::ddr_joint, TrainMode::ddr_disjoint, TrainMode::ddr_q,
                         TrainMode::fcnn, TrainMode::fcnn_joint}) {
    CAPTURE(to_string(mode));
    TrainConfig c = small_config(mode, 3);
    c.feature_widths = {32, 32};
    c.regression_widths = {32};
    c.batch_size = 32;
    Trainer t(c, *d.stats, empirical_deciles(tr.y));
    const LossWeights w = anneal_weights(c.schedule.flattened(), 0, 1);
    const LossSamples fixed = t.draw_samples(tr.rows());
    const double before = t.loss(tr.x, tr.y, fixed, w).total;
    for (int i = 0; i < 100; ++i) t.step(tr.x, tr.y, w);
    const double after = t.loss(tr.x, tr.y, fixed, w).total;
    CHECK(after <= 0.5 * before);
  }
}

TEST_CASE("training is deterministic for a fixed seed") {
  const Dataset d = small_data(400, 3);
  for (TrainMode mode : {TrainMode::ddr_joint, TrainMode::fcnn}) {
    const TrainConfig c = small_config(mode, 7);
    const TrainResult a = train(d, c);
    const TrainResult b = train(d, c);
    CHECK(same_outcome(a.report, b.report));
    REQUIRE(a.models.size() == b.models.size());
    for (std::size_t i = 0; i < a.models.size(); ++i) CHECK(a.models[i] == b.models[i]);
    TrainConfig other = c;
    other.seed = 8;
    CHECK_FALSE(train(d, other).models.front() == a.models.front());
  }
}

TEST_CASE("fixed-level modes build the right models") {
  const Dataset d = small_data(200, 4);
  const TrainResult nine = train(d, small_config(TrainMode::fcnn));
  REQUIRE(nine.models.size() == 9);
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(nine.models[i].fixed_levels() == std::vector<double>{kDeciles[i]});
    // Same backbone widths as the DDR nets.
    CHECK(nine.models[i].arch().feature_widths == std::vector<std::size_t>{16, 16});
  }
  const TrainResult joint = train(d, small_config(TrainMode::fcnn_joint));
  REQUIRE(joint.models.size() == 1);
  CHECK(joint.models[0].arch().output_dim == 9);
  CHECK_FALSE(joint.report.initial_recover_q);
}

TEST_CASE("a trained DDR model behaves like a conditional distribution") {
  const Dataset d = small_data(3000, 5);
  TrainConfig c = small_config(TrainMode::ddr_joint, 1);
  c.feature_widths = {32, 32};
  c.regression_widths = {32};
  c.epochs = 30;
  const TrainResult r = train(d, c);
  const DdrModel& m = r.models.front();
  const Dataset val = d.subset(Split::validation);

  const auto q1 = m.q_forward(0.1, val.x);
  const auto q5 = m.q_forward(0.5, val.x);
  const auto q9 = m.q_forward(0.9, val.x);
  const auto& st = *d.stats;
  double median_err = 0.0;
  for (std::size_t i = 0; i < val.rows(); ++i) {
    CHECK(q9[i] > q1[i]);
    const double x_raw = val.x(i, 0) * st.x_std[0] + st.x_mean[0];
    const double truth = (oracle_quantile(Family::linear_constant, 0.3, 0.5, x_raw) - st.y_mean) / st.y_std;
    median_err += std::abs(q5[i] - truth);
  }
  // Median within 0.1 standardized units of the truth on average.
  CHECK(median_err / static_cast<double>(val.rows()) < 0.1);

  for (double p : m.f_forward(std::vector<double>(val.rows(), st.ytilde_max + 3.0), val.x).probability) CHECK(p >= 0.99);
  for (double p : m.f_forward(std::vector<double>(val.rows(), st.ytilde_min - 3.0), val.x).probability) CHECK(p <= 0.01);

  REQUIRE(r.report.initial_recover_q);
  REQUIRE(r.report.validation.recover_q);
  CHECK(*r.report.validation.recover_q < *r.report.initial_recover_q);
  CHECK(*r.report.validation.recover_f < *r.report.initial_recover_f);
  CHECK(r.report.selected_epoch >= 15);
  CHECK(r.report.steps_run == r.report.planned_steps);
}

TEST_CASE("prepare_dataset standardizes on the training split") {
  const Dataset d = small_data(100, 6);
  REQUIRE(d.stats);
  CHECK(d.rows_in(Split::validation).size() == 20);
  const Dataset raw = generate({Family::linear_constant, 100, 6, 0.3});
  CHECK_THROWS_AS(train(raw, small_config(TrainMode::ddr_q)), Error);
}
