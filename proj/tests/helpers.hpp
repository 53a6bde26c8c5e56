// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ddr/losses.hpp"
#include "ddr/network.hpp"
#include "ddr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

namespace ddr::test {

inline ArchSpec small_arch(std::size_t input_dim = 2, bool quantile = true, bool cdf = true) {
  ArchSpec a;
  a.input_dim = input_dim;
  a.feature_widths = {3, 3};
  a.regression_widths = {4};
  a.quantile_head = quantile;
  a.cdf_head = cdf;
  return a;
}

// Glorot weights plus nonzero biases, so no unit starts exactly on a kink.
inline DdrModel random_model(const ArchSpec& arch, std::uint64_t seed, double bias_scale = 0.3) {
  DdrModel m(arch, Standardization::identity(arch.input_dim), seed);
  RngStream rng(seed, "test-bias");
  for (auto& [name, t] : m.parameters()) {
    if (name.ends_with(".bias")) {
      for (double& v : t.values()) v = rng.uniform(-bias_scale, bias_scale);
    }
  }
  return m;
}

inline Tensor2 random_x(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  RngStream rng(seed, "test-x");
  Tensor2 x(rows, cols);
  for (double& v : x.values()) v = rng.uniform(-1.5, 1.5);
  return x;
}

inline std::vector<double> random_values(std::size_t n, double lo, double hi, std::uint64_t seed,
                                         std::string_view purpose) {
  RngStream rng(seed, purpose);
  std::vector<double> v(n);
  for (double& e : v) e = rng.uniform(lo, hi);
  return v;
}

inline LossSamples random_samples(std::size_t n, std::uint64_t seed) {
  LossSamples s;
  s.tau = random_values(n, 0.02, 0.98, seed, "test-tau");
  s.tau_anchor = random_values(n, 0.1, 0.9, seed, "test-tau-anchor");
  s.ytilde = random_values(n, -1.0, 1.0, seed, "test-ytilde");
  s.ytilde_anchor = random_values(n, -1.0, 1.0, seed, "test-ytilde-anchor");
  return s;
}

inline LossWeights one_hot(LossTerm t) {
  LossWeights w{};
  w[index(t)] = 1.0;
  return w;
}

// |a − n| / max(|a|, |n|, floor). The floor keeps entries whose true
// derivative is ~0 from turning round-off into a large ratio.
inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct FdResult {
  double max_rel = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  std::string worst;
};

// Value of a loss and the kink pattern of the evaluation that produced it.
using ProbeFn = std::function<std::pair<double, std::vector<std::uint8_t>>(const DdrModel&)>;

// Central differences over every parameter entry. Entries whose ± probes
// change the kink pattern straddle a nondifferentiable point and are skipped.
inline FdResult finite_difference_check(const DdrModel& model, const GradientMap& grads,
                                        const ProbeFn& probe, double step = 1e-6) {
  FdResult r;
  const auto base_pattern = probe(model).second;
  DdrModel m = model;
  for (auto& [name, t] : m.parameters()) {
    const Tensor2& g = grads.at(name);
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double keep = t[k];
      t[k] = keep + step;
      const auto hi = probe(m);
      t[k] = keep - step;
      const auto lo = probe(m);
      t[k] = keep;
      if (hi.second != base_pattern || lo.second != base_pattern) {
        ++r.skipped;
        continue;
      }
      const double numeric = (hi.first - lo.first) / (2.0 * step);
      const double e = relative_error(g[k], numeric);
      ++r.checked;
      if (e > r.max_rel) {
        r.max_rel = e;
        std::ostringstream os;
        os << name << "[" << k << "] analytic " << g[k] << " numeric " << numeric;
        r.worst = os.str();
      }
    }
  }
  return r;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("ddr-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace ddr::test
