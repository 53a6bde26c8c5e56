// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ddr/training.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace ddr::cli {

// Entry point shared by the executable and the tests. Errors are written to
// `err` as one line `ddr: error: <code>: <message>`; the return value is the
// process exit status.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Applies a JSON config object on top of `config`. Unknown keys are errors.
void apply_config(TrainConfig& config, const nlohmann::json& j);
nlohmann::json config_to_json(const TrainConfig& config);

// "q10" for 0.1, "q2.5" for 0.025.
std::string level_label(double tau);
std::vector<double> parse_level_list(const std::string& text);

// Model files written by `train` for a given output path and mode.
std::vector<std::filesystem::path> model_paths(const std::filesystem::path& out, TrainMode mode,
                                               const std::vector<double>& levels);
// Loads one model file, or the per-level family `<path>.q10`, ... when `path`
// itself does not exist.
std::vector<DdrModel> load_models(const std::filesystem::path& path);

// Every column parsed as a feature; targets are set to zero.
Dataset load_feature_csv(const std::filesystem::path& path);

}  // namespace ddr::cli
