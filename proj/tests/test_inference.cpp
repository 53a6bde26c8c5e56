// SPDX-License-Identifier: Apache-2.0

#include "ddr/data.hpp"
#include "ddr/error.hpp"
#include "ddr/inference.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace ddr;
using namespace ddr::test;

namespace {

// Q(τ, x) = g(τ) and η(ỹ, x) = ỹ − shift, i.e. F(ỹ) = σ(ỹ − shift).
FunctionHeads rigged(std::function<double(double)> q, double shift = 0.0) {
  return FunctionHeads([q](double t, std::span<const double>) { return q(t); },
                       [shift](double v, std::span<const double>) { return v - shift; });
}

double closed_form_trapezoid(std::size_t n) {
  // ∫ τ dτ by the trapezoid rule on the mean grid, divided by the span.
  const auto g = mean_grid(n);
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < g.size(); ++i) s += 0.5 * (g[i] + g[i + 1]) * (g[i + 1] - g[i]);
  return s / 0.98;
}

}  // namespace

TEST_CASE("F inversion on a rigged logistic") {
  const auto h = rigged([](double t) { return t; });
  const Tensor2 x(3, 1);
  const SearchInterval iv{-5.0, 5.0};
  const Inversion mid = invert_f(h, 0.5, x, iv);
  for (double v : mid.value) CHECK(std::abs(v) <= 1e-8);
  const Inversion at = invert_f(h, sigmoid(1.7), x, iv);
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(at.value[r] == doctest::Approx(1.7).epsilon(1e-8));
    CHECK(at.saturated[r] == 0);
    CHECK(std::abs(sigmoid(at.value[r]) - sigmoid(1.7)) <= 1e-6);
  }
}

TEST_CASE("saturated inversion returns the endpoint and flags it") {
  const auto h = rigged([](double t) { return t; });
  const Tensor2 x(2, 1);
  const Inversion r = invert_f(h, 0.999, x, {-2.0, 2.0});
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(r.value[i] == 2.0);
    CHECK(r.saturated[i] == 1);
  }
  const Inversion low = invert_f(h, 0.001, x, {-2.0, 2.0});
  CHECK(low.value[0] == -2.0);
  CHECK(low.saturated[0] == 1);
}

TEST_CASE("inversion accuracy over random monotone rigs") {
  const Tensor2 x = random_x(10, 1, 3);
  // F(ỹ | x) = σ(a(x)·(ỹ − b(x))) with a > 0.
  const FunctionHeads h([](double t, std::span<const double>) { return t; },
                        [](double v, std::span<const double> row) {
                          const double a = 1.0 + row[0] * row[0];
                          return a * (v - 0.3 * row[0]);
                        });
  for (double tau : {0.02, 0.3, 0.77, 0.95}) {
    const Inversion r = invert_f(h, tau, x, {-10.0, 10.0});
    const auto f = h.cdf(r.value, x);
    for (std::size_t i = 0; i < f.size(); ++i) {
      CHECK(r.saturated[i] == 0);
      CHECK(std::abs(f[i] - tau) <= 1e-6);
    }
  }
}

TEST_CASE("dual blend endpoints and midpoint") {
  const auto h = rigged([](double) { return 2.0; }, 4.0);
  const Tensor2 x = random_x(4, 1, 4);
  const SearchInterval iv{0.0, 8.0};
  CHECK(dual_predict_quantile(h, 0.5, x, 1.0, iv) == h.quantile(0.5, x));
  CHECK(dual_predict_quantile(h, 0.5, x, 0.0, iv) == invert_f(h, 0.5, x, iv).value);
  for (double v : dual_predict_quantile(h, 0.5, x, 0.5, iv)) {
    CHECK(v == doctest::Approx(3.0).epsilon(1e-9));
  }
  // Moves monotonically from the F-inverted value (4) to the Q value (2).
  double last = 4.0 + 1e-9;
  for (double a = 0.0; a <= 1.0; a += 0.1) {
    const double v = dual_predict_quantile(h, 0.5, x, a, iv)[0];
    CHECK(v <= last + 1e-12);
    CHECK(v >= 2.0 - 1e-12);
    last = v;
  }
  CHECK_THROWS_AS(dual_predict_quantile(h, 0.5, x, 1.5, iv), Error);
}

TEST_CASE("predictor modes route to the right head") {
  const auto h = rigged([](double t) { return 10.0 * t; }, 1.0);
  const Tensor2 x(2, 1);
  const SearchInterval iv{-20.0, 20.0};
  CHECK(HeadsPredictor(h, InferenceMode::q_only, 0.5, iv).predict(0.3, x)[0] == 3.0);
  CHECK(HeadsPredictor(h, InferenceMode::f_invert, 0.5, iv).predict(0.5, x)[0] ==
        doctest::Approx(1.0).epsilon(1e-8));
  CHECK(HeadsPredictor(h, InferenceMode::dual, 0.5, iv).predict(0.5, x)[0] ==
        doctest::Approx(3.0).epsilon(1e-8));
  CHECK(parse_inference_mode("dual") == InferenceMode::dual);
  CHECK(to_string(InferenceMode::f_invert) == "f-invert");
}

TEST_CASE("trapezoid mean") {
  const Tensor2 x(3, 1);
  const SearchInterval iv{};
  for (double c : {-2.5, 0.0, 0.1, 7.25}) {
    const auto h = rigged([c](double) { return c; });
    HeadsPredictor p(h, InferenceMode::q_only, 0.5, iv);
    for (double v : predict_mean(p, x, 99)) CHECK(std::abs(v - c) <= 4 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(c)));
  }
  const auto id = rigged([](double t) { return t; });
  HeadsPredictor pid(id, InferenceMode::q_only, 0.5, iv);
  const double m = predict_mean(pid, x, 99)[0];
  CHECK(std::abs(m - closed_form_trapezoid(99)) <= 1e-12);
  // Trapezoids are exact on a linear integrand: (0.99² − 0.01²) / 2 / 0.98 = 0.5.
  CHECK(std::abs(m - 0.5) <= 1e-12);

  const auto normal = rigged([](double t) { return standard_normal_quantile(t); });
  HeadsPredictor pn(normal, InferenceMode::q_only, 0.5, iv);
  CHECK(std::abs(predict_mean(pn, x, 999)[0]) <= 0.02);

  const auto g = mean_grid(3);
  REQUIRE(g.size() == 5);
  CHECK(g.front() == 0.01);
  CHECK(g.back() == doctest::Approx(0.99).epsilon(1e-15));
}

TEST_CASE("median is the τ = 0.5 quantile") {
  const DdrModel m = random_model(small_arch(1), 3);
  const Tensor2 x = random_x(6, 1, 3);
  ModelPredictor p(m);
  CHECK(predict_median(p, x) == p.predict(0.5, x));
  CHECK(predict_median(p, x) == m.q_forward(0.5, x));
}

TEST_CASE("quantile grid is one batch with one column per level") {
  const DdrModel m = random_model(small_arch(2), 4);
  const Tensor2 x = random_x(5, 2, 4);
  std::vector<double> taus;
  for (int i = 0; i < 101; ++i) taus.push_back(0.01 + 0.98 * i / 100.0);
  const Tensor2 grid = predict_quantile_grid(m, taus, x);
  CHECK(grid.rows() == 5);
  CHECK(grid.cols() == 101);
  for (std::size_t c : {0u, 50u, 100u}) {
    const auto col = m.q_forward(taus[c], x);
    for (std::size_t r = 0; r < 5; ++r) CHECK(grid(r, c) == doctest::Approx(col[r]).epsilon(1e-13));
  }
}

TEST_CASE("original units undo the target scaling") {
  Standardization st = Standardization::identity(1);
  st.y_mean = 4.5;
  st.y_std = 2.0;
  DdrModel m = DdrModel::zeros(small_arch(1), st);
  const Tensor2 x(3, 1);
  for (double v : predict_quantile(m, 0.3, x, true)) CHECK(v == 4.5);
  m.parameter("output.bias")[0] = 1.0;
  for (double v : predict_quantile(m, 0.3, x, true)) CHECK(v == 6.5);
  for (double p : predict_cdf(m, 0.0, x)) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("fixed-level predictor") {
  ArchSpec a = small_arch(1, false, false);
  a.output_dim = 3;
  DdrModel m = random_model(a, 5);
  m.set_fixed_levels({0.1, 0.5, 0.9});
  const Tensor2 x = random_x(4, 1, 5);
  FixedLevelPredictor p({&m});
  CHECK(p.levels() == std::vector<double>{0.1, 0.5, 0.9});
  const Tensor2 out = m.backbone_forward(x);
  const auto q9 = p.predict(0.9, x);
  for (std::size_t r = 0; r < 4; ++r) CHECK(q9[r] == out(r, 2));
  CHECK_THROWS_AS(p.predict(0.3, x), Error);
}

TEST_CASE("bundle collects quantiles, mean and median") {
  const auto h = rigged([](double t) { return 2.0 * t; });
  HeadsPredictor p(h, InferenceMode::q_only, 0.5, {});
  const Tensor2 x(2, 1);
  const std::vector<double> taus{0.1, 0.9};
  const PredictionBundle b = predict_bundle(p, x, taus, 99);
  CHECK(b.quantiles.cols() == 2);
  CHECK(b.quantiles(0, 1) == 1.8);
  CHECK(b.median[0] == 1.0);
  CHECK(b.mean[0] == doctest::Approx(1.0).epsilon(1e-6));
}
