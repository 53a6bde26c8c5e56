// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ddr {

enum class ErrorCode {
  invalid_argument,
  shape_mismatch,
  bad_state,
  io,
  format,
  incompatible,
  divergence,
  usage,
};

std::string_view to_string(ErrorCode code);

// All recoverable failures in the library are reported through this type.
// The code is stable and is what the CLI prints as its machine-readable prefix.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ddr
