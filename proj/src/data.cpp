// SPDX-License-Identifier: Apache-2.0

#include "ddr/data.hpp"

#include "ddr/error.hpp"
#include "ddr/rng.hpp"

#include <boost/math/distributions/normal.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace ddr {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::string_view unquote(std::string_view s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string_view> split_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::optional<double> parse_number(std::string_view cell) {
  cell = unquote(cell);
  if (cell.empty()) return std::nullopt;
  if (cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || end != cell.data() + cell.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double e : v) s += e;
  return s / static_cast<double>(v.size());
}

double std_of(std::span<const double> v, double mean) {
  double s = 0.0;
  for (double e : v) s += (e - mean) * (e - mean);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

std::vector<std::size_t> Dataset::rows_in(Split which) const {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < rows(); ++r) {
    if (split_of(r) == which) out.push_back(r);
  }
  return out;
}

Dataset Dataset::select(std::span<const std::size_t> index) const {
  Dataset out;
  out.feature_names = feature_names;
  out.target_name = target_name;
  out.stats = stats;
  out.x = x.gather_rows(index);
  out.y.reserve(index.size());
  for (std::size_t r : index) out.y.push_back(y[r]);
  if (!split.empty()) {
    out.split.reserve(index.size());
    for (std::size_t r : index) out.split.push_back(split[r]);
  }
  return out;
}

Dataset Dataset::subset(Split which) const {
  const auto index = rows_in(which);
  Dataset out = select(index);
  out.split.assign(index.size(), which);
  return out;
}

void Dataset::validate() const {
  if (x.rows() != y.size()) {
    throw Error(ErrorCode::shape_mismatch, "dataset: feature and target row counts differ");
  }
  if (feature_names.size() != x.cols()) {
    throw Error(ErrorCode::shape_mismatch, "dataset: feature name count differs from columns");
  }
  if (!split.empty() && split.size() != y.size()) {
    throw Error(ErrorCode::shape_mismatch, "dataset: split assignment has the wrong length");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw Error(ErrorCode::invalid_argument, "dataset: non-finite target");
  }
}

Dataset parse_csv(std::istream& in, std::optional<std::string> target) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::format, "csv: missing header row");
  std::vector<std::string> header;
  for (auto cell : split_line(line)) header.emplace_back(unquote(cell));
  if (header.size() < 2) {
    throw Error(ErrorCode::format, "csv: need at least one feature column and a target");
  }

  std::size_t target_col = header.size() - 1;
  if (target && !target->empty()) {
    const auto it = std::find(header.begin(), header.end(), *target);
    if (it == header.end()) {
      std::string names;
      for (const auto& h : header) names += (names.empty() ? "" : ", ") + h;
      throw Error(ErrorCode::invalid_argument,
                  "csv: no target column '" + *target + "'; available columns: " + names);
    }
    target_col = static_cast<std::size_t>(it - header.begin());
  }

  Dataset data;
  data.target_name = header[target_col];
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != target_col) data.feature_names.push_back(header[c]);
  }
  const std::size_t d = data.feature_names.size();
  std::vector<double> features;
  std::vector<double> row(d);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    bool ok = cells.size() == header.size();
    double y = 0.0;
    for (std::size_t c = 0, f = 0; ok && c < cells.size(); ++c) {
      const auto v = parse_number(cells[c]);
      if (!v) {
        ok = false;
      } else if (c == target_col) {
        y = *v;
      } else {
        row[f++] = *v;
      }
    }
    if (!ok) {
      ++data.rejected_rows;
      continue;
    }
    features.insert(features.end(), row.begin(), row.end());
    data.y.push_back(y);
  }
  if (data.y.empty()) throw Error(ErrorCode::format, "csv: no usable rows");
  data.x = Tensor2(data.y.size(), d, std::move(features));
  if (data.rejected_rows > 0) {
    data.warnings.push_back("rejected " + std::to_string(data.rejected_rows) +
                            " row(s) with missing or non-numeric cells");
  }
  return data;
}

Dataset load_csv(const std::filesystem::path& path, std::optional<std::string> target) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path.string() + "'");
  return parse_csv(in, std::move(target));
}

std::string format_double(double value) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  (void)ec;
  return std::string(buf, end);
}

void write_csv(const std::filesystem::path& path, const Dataset& data) {
  data.validate();
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write '" + path.string() + "'");
  for (const auto& name : data.feature_names) out << name << ',';
  out << data.target_name << '\n';
  for (std::size_t r = 0; r < data.rows(); ++r) {
    for (std::size_t c = 0; c < data.dim(); ++c) out << format_double(data.x(r, c)) << ',';
    out << format_double(data.y[r]) << '\n';
  }
  if (!out) throw Error(ErrorCode::io, "write failed for '" + path.string() + "'");
}

void assign_split(Dataset& data, double validation_fraction, std::uint64_t seed,
                  double test_fraction) {
  if (!(validation_fraction > 0.0 && validation_fraction <= 0.5)) {
    throw Error(ErrorCode::invalid_argument, "split: validation fraction must lie in (0, 0.5]");
  }
  if (!(test_fraction >= 0.0 && validation_fraction + test_fraction < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "split: fractions leave no training rows");
  }
  const std::size_t n = data.rows();
  const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  if (n_val == 0 || (test_fraction > 0.0 && n_test == 0) || n_val + n_test >= n) {
    throw Error(ErrorCode::invalid_argument,
                "split: " + std::to_string(n) + " rows are too few for the requested split");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  RngStream rng(seed, "split");
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);
  data.split.assign(n, Split::train);
  for (std::size_t i = 0; i < n_val; ++i) data.split[order[i]] = Split::validation;
  for (std::size_t i = n_val; i < n_val + n_test; ++i) data.split[order[i]] = Split::test;
}

Dataset standardize(const Dataset& raw) {
  raw.validate();
  if (raw.stats) throw Error(ErrorCode::bad_state, "standardize: dataset is already standardized");
  const auto train_rows = raw.rows_in(Split::train);
  if (train_rows.empty()) throw Error(ErrorCode::invalid_argument, "standardize: no training rows");

  Standardization stats;
  std::vector<std::size_t> keep;
  std::vector<std::string> warnings = raw.warnings;
  std::vector<double> column(train_rows.size());
  for (std::size_t c = 0; c < raw.dim(); ++c) {
    for (std::size_t i = 0; i < train_rows.size(); ++i) column[i] = raw.x(train_rows[i], c);
    const double m = mean_of(column);
    const double s = std_of(column, m);
    if (!(s > 0.0)) {
      warnings.push_back("dropped constant feature '" + raw.feature_names[c] + "'");
      continue;
    }
    keep.push_back(c);
    stats.feature_names.push_back(raw.feature_names[c]);
    stats.x_mean.push_back(m);
    stats.x_std.push_back(s);
  }
  if (keep.empty()) throw Error(ErrorCode::invalid_argument, "standardize: every feature is constant");

  for (std::size_t i = 0; i < train_rows.size(); ++i) column[i] = raw.y[train_rows[i]];
  stats.y_mean = mean_of(column);
  stats.y_std = std_of(column, stats.y_mean);
  if (!(stats.y_std > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "standardize: target is constant on the training rows");
  }
  const auto [lo, hi] = std::minmax_element(column.begin(), column.end());
  stats.ytilde_min = stats.transform_y(*lo);
  stats.ytilde_max = stats.transform_y(*hi);

  Dataset out;
  out.feature_names = stats.feature_names;
  out.target_name = raw.target_name;
  out.split = raw.split;
  out.rejected_rows = raw.rejected_rows;
  out.warnings = std::move(warnings);
  out.x = Tensor2(raw.rows(), keep.size());
  for (std::size_t r = 0; r < raw.rows(); ++r) {
    for (std::size_t k = 0; k < keep.size(); ++k) {
      out.x(r, k) = (raw.x(r, keep[k]) - stats.x_mean[k]) / stats.x_std[k];
    }
  }
  out.y = stats.transform_y(raw.y);
  out.stats = std::move(stats);
  return out;
}

Dataset apply_standardization(const Dataset& raw, const Standardization& stats) {
  raw.validate();
  stats.validate();
  if (raw.stats) {
    throw Error(ErrorCode::bad_state, "apply_standardization: dataset is already standardized");
  }
  std::vector<std::size_t> cols;
  for (const auto& name : stats.feature_names) {
    const auto it = std::find(raw.feature_names.begin(), raw.feature_names.end(), name);
    if (it == raw.feature_names.end()) {
      throw Error(ErrorCode::incompatible, "data has no feature column '" + name +
                                               "' required by the model");
    }
    cols.push_back(static_cast<std::size_t>(it - raw.feature_names.begin()));
  }
  Dataset out;
  out.feature_names = stats.feature_names;
  out.target_name = raw.target_name;
  out.split = raw.split;
  out.rejected_rows = raw.rejected_rows;
  out.warnings = raw.warnings;
  out.x = Tensor2(raw.rows(), cols.size());
  for (std::size_t r = 0; r < raw.rows(); ++r) {
    for (std::size_t k = 0; k < cols.size(); ++k) {
      out.x(r, k) = (raw.x(r, cols[k]) - stats.x_mean[k]) / stats.x_std[k];
    }
  }
  out.y = stats.transform_y(raw.y);
  out.stats = stats;
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Family family) {
  switch (family) {
    case Family::linear_constant: return "linear-constant";
    case Family::linear_linear: return "linear-linear";
    case Family::quad_linear: return "quad-linear";
    case Family::sin_constant: return "sin-constant";
  }
  return "unknown";
}

std::string family_list() {
  return "linear-constant, linear-linear, quad-linear, sin-constant";
}

Family parse_family(std::string_view text) {
  for (Family f : {Family::linear_constant, Family::linear_linear, Family::quad_linear,
                   Family::sin_constant}) {
    if (text == to_string(f)) return f;
  }
  throw Error(ErrorCode::usage,
              "unknown family '" + std::string(text) + "'; choose one of: " + family_list());
}

void SyntheticSpec::validate() const {
  if (n == 0) throw Error(ErrorCode::invalid_argument, "synthetic: n must be >= 1");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw Error(ErrorCode::invalid_argument, "synthetic: sigma must be positive");
  }
}

double family_mean(Family family, double x) {
  switch (family) {
    case Family::linear_constant:
    case Family::linear_linear: return 2.0 * x + 1.0;
    case Family::quad_linear: return 2.0 * x * x - 1.0;
    case Family::sin_constant: return std::sin(2.0 * std::numbers::pi * x);
  }
  return 0.0;
}

double family_noise_scale(Family family, double x) {
  switch (family) {
    case Family::linear_constant:
    case Family::sin_constant: return 1.0;
    case Family::linear_linear:
    case Family::quad_linear: return x + 1.5;
  }
  return 1.0;
}

double standard_normal_quantile(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "normal quantile: level must lie in (0, 1)");
  }
  return boost::math::quantile(boost::math::normal_distribution<double>(), tau);
}

double oracle_quantile(Family family, double sigma, double tau, double x) {
  return family_mean(family, x) + sigma * family_noise_scale(family, x) * standard_normal_quantile(tau);
}

Dataset generate(const SyntheticSpec& spec) {
  spec.validate();
  RngStream features(spec.seed, "features");
  RngStream noise(spec.seed, "noise");
  Dataset data;
  data.feature_names = {"x1"};
  data.target_name = "y";
  data.x = Tensor2(spec.n, 1);
  data.y.resize(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const double x = features.uniform(-1.0, 1.0);
    data.x[i] = x;
    data.y[i] = family_mean(spec.family, x) +
                spec.sigma * family_noise_scale(spec.family, x) * noise.normal();
  }
  return data;
}

std::filesystem::path oracle_sidecar_path(const std::filesystem::path& csv) {
  auto p = csv;
  p += ".oracle.json";
  return p;
}

void write_oracle_sidecar(const std::filesystem::path& path, const SyntheticSpec& spec) {
  nlohmann::json j;
  j["family"] = std::string(to_string(spec.family));
  j["n"] = spec.n;
  j["seed"] = spec.seed;
  j["sigma"] = spec.sigma;
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write '" + path.string() + "'");
  out << j.dump(1) << '\n';
}

SyntheticSpec read_oracle_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path.string() + "'");
  try {
    const auto j = nlohmann::json::parse(in);
    SyntheticSpec spec;
    spec.family = parse_family(j.at("family").get<std::string>());
    spec.n = j.at("n").get<std::size_t>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.sigma = j.at("sigma").get<double>();
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format, "oracle sidecar '" + path.string() + "': " + e.what());
  }
}

}  // namespace ddr
