// SPDX-License-Identifier: Apache-2.0

#include "ddr/rng.hpp"

namespace ddr {

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::string_view purpose) noexcept {
  // FNV-1a over the purpose tag, then two splitmix rounds.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : purpose) {
    h = (h ^ c) * 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(seed) ^ h);
}

RngStream::RngStream(std::uint64_t seed, std::string_view purpose)
    : engine_(mix_seed(seed, purpose)) {}

double RngStream::normal() { return normal_(engine_); }

std::size_t RngStream::index(std::size_t n) noexcept {
  // Modulo bias is negligible for n far below 2^64.
  return static_cast<std::size_t>(engine_() % n);
}

}  // namespace ddr
