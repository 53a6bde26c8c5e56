// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ddr {

// Independent, reproducible random stream keyed by (seed, purpose). Separate
// purposes ("tau", "ytilde", "shuffle", "init", ...) never share state, so
// adding draws to one stream leaves the others unchanged.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view purpose);

  std::mt19937_64& engine() noexcept { return engine_; }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  double normal();
  std::size_t index(std::size_t n) noexcept;

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t mix_seed(std::uint64_t seed, std::string_view purpose) noexcept;

}  // namespace ddr
