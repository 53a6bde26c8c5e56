// SPDX-License-Identifier: Apache-2.0

#include "ddr/network.hpp"

#include "ddr/error.hpp"
#include "ddr/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <fstream>
#include <sstream>

namespace ddr {

namespace {

using json = nlohmann::json;

std::string layer_name(std::string_view prefix, std::size_t k) {
  return std::string(prefix) + std::to_string(k);
}

void check_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw Error(ErrorCode::invalid_argument,
                "percentile " + std::to_string(tau) + " outside (0, 1)");
  }
}

// pre += injection(s) for one feature layer, evaluated directly.
void inject(RowMajorMatrix& pre, const std::map<std::string, Tensor2>& params,
            const std::string& prefix, InjectionMode mode, std::span<const double> s) {
  const auto& w = params.at(prefix + ".weight");
  const auto& b = params.at(prefix + ".bias");
  Eigen::Map<const Eigen::VectorXd> sv(s.data(), static_cast<Eigen::Index>(s.size()));
  if (mode == InjectionMode::linear) {
    pre.noalias() += sv * w.matrix().row(0);
    pre.rowwise() += b.matrix().row(0);
    return;
  }
  const auto& pa = params.at(prefix + ".proj.weight");
  const auto& pb = params.at(prefix + ".proj.bias");
  RowMajorMatrix proj = sv * pa.matrix().row(0);
  proj.rowwise() += pb.matrix().row(0);
  const Eigen::Index half = proj.cols() / 2;
  RowMajorMatrix gated(proj.rows(), half);
  for (Eigen::Index r = 0; r < proj.rows(); ++r) {
    for (Eigen::Index c = 0; c < half; ++c) {
      gated(r, c) = proj(r, c) * sigmoid(proj(r, half + c));
    }
  }
  pre.noalias() += gated * w.matrix();
  pre.rowwise() += b.matrix().row(0);
}

RowMajorMatrix glu(const RowMajorMatrix& pre) {
  const Eigen::Index half = pre.cols() / 2;
  RowMajorMatrix out(pre.rows(), half);
  for (Eigen::Index r = 0; r < pre.rows(); ++r) {
    for (Eigen::Index c = 0; c < half; ++c) {
      out(r, c) = pre(r, c) * sigmoid(pre(r, half + c));
    }
  }
  return out;
}

json arch_to_json(const ArchSpec& a) {
  return json{{"input_dim", a.input_dim},
              {"feature_widths", a.feature_widths},
              {"regression_widths", a.regression_widths},
              {"output_dim", a.output_dim},
              {"injection", std::string(to_string(a.injection))},
              {"projection_width", a.projection_width},
              {"quantile_head", a.quantile_head},
              {"cdf_head", a.cdf_head}};
}

ArchSpec arch_from_json(const json& j) {
  ArchSpec a;
  a.input_dim = j.at("input_dim").get<std::size_t>();
  a.feature_widths = j.at("feature_widths").get<std::vector<std::size_t>>();
  a.regression_widths = j.at("regression_widths").get<std::vector<std::size_t>>();
  a.output_dim = j.at("output_dim").get<std::size_t>();
  a.injection = parse_injection_mode(j.at("injection").get<std::string>());
  a.projection_width = j.at("projection_width").get<std::size_t>();
  a.quantile_head = j.at("quantile_head").get<bool>();
  a.cdf_head = j.at("cdf_head").get<bool>();
  return a;
}

}  // namespace

double sigmoid(double v) noexcept {
  if (v >= 0.0) {
    return 1.0 / (1.0 + std::exp(-v));
  }
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double probability(double log_odds) noexcept {
  constexpr double lo = std::numeric_limits<double>::denorm_min();
  constexpr double hi = 1.0 - 0x1.0p-53;
  return std::clamp(sigmoid(log_odds), lo, hi);
}

std::string_view to_string(InjectionMode mode) {
  return mode == InjectionMode::linear ? "linear" : "mlp";
}

InjectionMode parse_injection_mode(std::string_view text) {
  if (text == "linear") return InjectionMode::linear;
  if (text == "mlp") return InjectionMode::mlp;
  throw Error(ErrorCode::invalid_argument,
              "unknown injection mode '" + std::string(text) + "' (expected linear|mlp)");
}

void ArchSpec::validate() const {
  if (input_dim == 0) {
    throw Error(ErrorCode::invalid_argument, "arch: input_dim must be positive");
  }
  if (feature_widths.empty() || regression_widths.empty()) {
    throw Error(ErrorCode::invalid_argument,
                "arch: at least one feature layer and one regression layer are required");
  }
  for (auto w : feature_widths) {
    if (w == 0) throw Error(ErrorCode::invalid_argument, "arch: feature widths must be positive");
  }
  for (auto w : regression_widths) {
    if (w == 0) throw Error(ErrorCode::invalid_argument, "arch: regression widths must be positive");
  }
  if (output_dim == 0) {
    throw Error(ErrorCode::invalid_argument, "arch: output_dim must be positive");
  }
  if (injection == InjectionMode::mlp && projection_width == 0) {
    throw Error(ErrorCode::invalid_argument, "arch: projection_width must be positive");
  }
}

std::vector<ParamShape> parameter_layout(const ArchSpec& arch) {
  arch.validate();
  std::vector<ParamShape> layout;
  std::size_t in = arch.input_dim;
  auto injected = [&](std::string_view prefix, std::size_t k, std::size_t width) {
    const std::string base = layer_name(prefix, k);
    if (arch.injection == InjectionMode::mlp) {
      layout.push_back({base + ".proj.weight", 1, 2 * arch.projection_width, ParamPart::feature});
      layout.push_back({base + ".proj.bias", 1, 2 * arch.projection_width, ParamPart::feature});
      layout.push_back({base + ".weight", arch.projection_width, width, ParamPart::feature});
    } else {
      layout.push_back({base + ".weight", 1, width, ParamPart::feature});
    }
    layout.push_back({base + ".bias", 1, width, ParamPart::feature});
  };
  for (std::size_t k = 0; k < arch.feature_widths.size(); ++k) {
    const std::size_t width = 2 * arch.feature_widths[k];
    layout.push_back({layer_name("feature", k) + ".weight", in, width, ParamPart::feature});
    layout.push_back({layer_name("feature", k) + ".bias", 1, width, ParamPart::feature});
    if (arch.quantile_head) injected("tau", k, width);
    if (arch.cdf_head) injected("ytilde", k, width);
    in = arch.feature_widths[k];
  }
  for (std::size_t k = 0; k < arch.regression_widths.size(); ++k) {
    const std::size_t width = arch.regression_widths[k];
    layout.push_back({layer_name("regression", k) + ".weight", in, width, ParamPart::regression});
    layout.push_back({layer_name("regression", k) + ".bias", 1, width, ParamPart::regression});
    in = width;
  }
  layout.push_back({"output.weight", in, arch.output_dim, ParamPart::regression});
  layout.push_back({"output.bias", 1, arch.output_dim, ParamPart::regression});
  return layout;
}

DdrModel::DdrModel(ArchSpec arch, Standardization stats)
    : arch_(std::move(arch)), stats_(std::move(stats)) {
  arch_.validate();
  stats_.validate();
  if (stats_.input_dim() != arch_.input_dim) {
    throw Error(ErrorCode::incompatible, "model: standardization covers " +
                                             std::to_string(stats_.input_dim()) +
                                             " features, arch expects " +
                                             std::to_string(arch_.input_dim));
  }
}

DdrModel::DdrModel(ArchSpec arch, Standardization stats, std::uint64_t seed)
    : DdrModel(std::move(arch), std::move(stats)) {
  RngStream rng(seed, "init");
  for (const auto& p : parameter_layout(arch_)) {
    Tensor2 t(p.rows, p.cols);
    if (p.name.ends_with(".weight")) {
      const double limit = std::sqrt(6.0 / static_cast<double>(p.rows + p.cols));
      for (double& v : t.values()) {
        v = rng.uniform(-limit, limit);
      }
    }
    t.set_requires_grad(true);
    params_.emplace(p.name, std::move(t));
  }
}

DdrModel DdrModel::zeros(ArchSpec arch, Standardization stats) {
  DdrModel m(std::move(arch), std::move(stats));
  for (const auto& p : parameter_layout(m.arch_)) {
    m.params_.emplace(p.name, Tensor2(p.rows, p.cols).set_requires_grad(true));
  }
  return m;
}

Tensor2& DdrModel::parameter(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw Error(ErrorCode::invalid_argument, "model has no parameter '" + name + "'");
  }
  return it->second;
}

const Tensor2& DdrModel::parameter(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw Error(ErrorCode::invalid_argument, "model has no parameter '" + name + "'");
  }
  return it->second;
}

void DdrModel::set_fixed_levels(std::vector<double> levels) {
  if (!levels.empty() && levels.size() != arch_.output_dim) {
    throw Error(ErrorCode::invalid_argument, "model: one fixed level per output column required");
  }
  for (double t : levels) check_tau(t);
  fixed_levels_ = std::move(levels);
}

void DdrModel::check_input(const Tensor2& x) const {
  if (x.cols() != arch_.input_dim) {
    throw Error(ErrorCode::shape_mismatch, "model expects " + std::to_string(arch_.input_dim) +
                                               " features, got " + std::to_string(x.cols()));
  }
}

Tensor2 DdrModel::run(const Tensor2& x, Injected which, std::span<const double> scalar) const {
  check_input(x);
  if (which != Injected::none && scalar.size() != x.rows()) {
    throw Error(ErrorCode::shape_mismatch, "model: one injected value per row required");
  }
  RowMajorMatrix h = x.matrix();
  for (std::size_t k = 0; k < arch_.feature_widths.size(); ++k) {
    const std::string base = layer_name("feature", k);
    RowMajorMatrix pre = h * params_.at(base + ".weight").matrix();
    pre.rowwise() += params_.at(base + ".bias").matrix().row(0);
    if (which == Injected::tau) {
      inject(pre, params_, layer_name("tau", k), arch_.injection, scalar);
    } else if (which == Injected::ytilde) {
      inject(pre, params_, layer_name("ytilde", k), arch_.injection, scalar);
    }
    h = glu(pre);
  }
  for (std::size_t k = 0; k < arch_.regression_widths.size(); ++k) {
    const std::string base = layer_name("regression", k);
    RowMajorMatrix pre = h * params_.at(base + ".weight").matrix();
    pre.rowwise() += params_.at(base + ".bias").matrix().row(0);
    h = pre.cwiseMax(0.0);
  }
  RowMajorMatrix out = h * params_.at("output.weight").matrix();
  out.rowwise() += params_.at("output.bias").matrix().row(0);
  Tensor2 result(static_cast<std::size_t>(out.rows()), static_cast<std::size_t>(out.cols()));
  result.matrix() = out;
  return result;
}

Tensor2 DdrModel::backbone_forward(const Tensor2& x) const { return run(x, Injected::none, {}); }

std::vector<double> DdrModel::median_forward(const Tensor2& x) const {
  const Tensor2 out = backbone_forward(x);
  std::vector<double> y(out.rows());
  for (std::size_t r = 0; r < out.rows(); ++r) y[r] = out(r, 0);
  return y;
}

std::vector<double> DdrModel::q_forward(double tau, const Tensor2& x) const {
  std::vector<double> taus(x.rows(), tau);
  return q_forward(taus, x);
}

std::vector<double> DdrModel::q_forward(std::span<const double> tau, const Tensor2& x) const {
  if (!arch_.quantile_head) {
    throw Error(ErrorCode::incompatible, "model has no quantile head");
  }
  for (double t : tau) check_tau(t);
  return q_forward_unchecked(tau, x);
}

std::vector<double> DdrModel::q_forward_unchecked(std::span<const double> tau,
                                                  const Tensor2& x) const {
  if (!arch_.quantile_head) {
    throw Error(ErrorCode::incompatible, "model has no quantile head");
  }
  std::vector<double> centred(tau.size());
  for (std::size_t i = 0; i < tau.size(); ++i) {
    centred[i] = 2.0 * tau[i] - 1.0;
  }
  const Tensor2 out = run(x, Injected::tau, centred);
  std::vector<double> y(out.rows());
  for (std::size_t r = 0; r < out.rows(); ++r) y[r] = out(r, 0);
  return y;
}

CdfOutput DdrModel::f_forward(double ytilde, const Tensor2& x) const {
  std::vector<double> ys(x.rows(), ytilde);
  return f_forward(ys, x);
}

CdfOutput DdrModel::f_forward(std::span<const double> ytilde, const Tensor2& x) const {
  if (!arch_.cdf_head) {
    throw Error(ErrorCode::incompatible, "model has no CDF head");
  }
  for (double v : ytilde) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::invalid_argument, "f_forward: non-finite anchor value");
    }
  }
  const Tensor2 out = run(x, Injected::ytilde, ytilde);
  CdfOutput result;
  result.log_odds.resize(out.rows());
  result.probability.resize(out.rows());
  for (std::size_t r = 0; r < out.rows(); ++r) {
    result.log_odds[r] = out(r, 0);
    result.probability[r] = probability(out(r, 0));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Tape construction

ModelNodes::ModelNodes(Tape& tape, const ArchSpec& arch) : tape_(&tape), arch_(arch) {
  for (const auto& p : parameter_layout(arch_)) {
    params_.emplace(p.name, tape.leaf(p.name, p.rows, p.cols));
  }
}

void ModelNodes::bind(Feed& feed, const DdrModel& model) const {
  if (model.arch() != arch_) {
    throw Error(ErrorCode::incompatible, "ModelNodes: model architecture differs from the tape");
  }
  for (const auto& [name, tensor] : model.parameters()) {
    feed.bind(name, tensor);
  }
}

NodeId ModelNodes::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw Error(ErrorCode::invalid_argument, "ModelNodes: no parameter '" + name + "'");
  }
  return it->second;
}

NodeId ModelNodes::median(NodeId x) const { return head(x, Injected::none, {}); }

NodeId ModelNodes::quantile(NodeId x, NodeId tau) const {
  if (!arch_.quantile_head) {
    throw Error(ErrorCode::incompatible, "ModelNodes: architecture has no quantile head");
  }
  return head(x, Injected::tau, tape_->affine(tau, 2.0, -1.0));
}

NodeId ModelNodes::log_odds(NodeId x, NodeId ytilde) const {
  if (!arch_.cdf_head) {
    throw Error(ErrorCode::incompatible, "ModelNodes: architecture has no CDF head");
  }
  return head(x, Injected::ytilde, ytilde);
}

NodeId ModelNodes::head(NodeId x, Injected which, NodeId scalar) const {
  Tape& t = *tape_;
  auto injection = [&](const std::string& prefix) {
    NodeId s = scalar;
    if (arch_.injection == InjectionMode::mlp) {
      NodeId proj = t.add_row(t.matmul(s, param(prefix + ".proj.weight")), param(prefix + ".proj.bias"));
      s = t.glu(proj);
    }
    return t.add_row(t.matmul(s, param(prefix + ".weight")), param(prefix + ".bias"));
  };

  NodeId h = x;
  for (std::size_t k = 0; k < arch_.feature_widths.size(); ++k) {
    const std::string base = layer_name("feature", k);
    NodeId pre = t.add_row(t.matmul(h, param(base + ".weight")), param(base + ".bias"));
    if (which == Injected::tau) {
      pre = t.add(pre, injection(layer_name("tau", k)));
    } else if (which == Injected::ytilde) {
      pre = t.add(pre, injection(layer_name("ytilde", k)));
    }
    h = t.glu(pre);
  }
  for (std::size_t k = 0; k < arch_.regression_widths.size(); ++k) {
    const std::string base = layer_name("regression", k);
    h = t.relu(t.add_row(t.matmul(h, param(base + ".weight")), param(base + ".bias")));
  }
  return t.add_row(t.matmul(h, param("output.weight")), param("output.bias"));
}

// ---------------------------------------------------------------------------
// Serialization

std::string to_json_text(const DdrModel& model) {
  const auto& st = model.stats();
  json params = json::array();
  for (const auto& p : parameter_layout(model.arch())) {
    const Tensor2& t = model.parameter(p.name);
    params.push_back(json{{"name", p.name},
                          {"rows", t.rows()},
                          {"cols", t.cols()},
                          {"values", std::vector<double>(t.values().begin(), t.values().end())}});
  }
  json doc{{"format_version", kModelFormatVersion},
           {"arch", arch_to_json(model.arch())},
           {"standardization",
            json{{"feature_names", st.feature_names},
                 {"x_mean", st.x_mean},
                 {"x_std", st.x_std},
                 {"y_mean", st.y_mean},
                 {"y_std", st.y_std},
                 {"ytilde_min", st.ytilde_min},
                 {"ytilde_max", st.ytilde_max}}},
           {"fixed_levels", model.fixed_levels()},
           {"parameters", std::move(params)}};
  return doc.dump(1) + "\n";
}

DdrModel from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format, std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    const int version = doc.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw Error(ErrorCode::incompatible, "model format_version " + std::to_string(version) +
                                               " is not supported (expected " +
                                               std::to_string(kModelFormatVersion) + ")");
    }
    const ArchSpec arch = arch_from_json(doc.at("arch"));
    const json& sj = doc.at("standardization");
    Standardization st;
    st.feature_names = sj.at("feature_names").get<std::vector<std::string>>();
    st.x_mean = sj.at("x_mean").get<std::vector<double>>();
    st.x_std = sj.at("x_std").get<std::vector<double>>();
    st.y_mean = sj.at("y_mean").get<double>();
    st.y_std = sj.at("y_std").get<double>();
    st.ytilde_min = sj.at("ytilde_min").get<double>();
    st.ytilde_max = sj.at("ytilde_max").get<double>();

    DdrModel model = DdrModel::zeros(arch, st);
    const json& pj = doc.at("parameters");
    const auto layout = parameter_layout(arch);
    if (pj.size() != layout.size()) {
      throw Error(ErrorCode::format, "model file holds " + std::to_string(pj.size()) +
                                         " parameter blocks, architecture needs " +
                                         std::to_string(layout.size()));
    }
    for (const auto& block : pj) {
      const auto name = block.at("name").get<std::string>();
      const auto rows = block.at("rows").get<std::size_t>();
      const auto cols = block.at("cols").get<std::size_t>();
      auto values = block.at("values").get<std::vector<double>>();
      Tensor2& slot = model.parameter(name);
      if (slot.rows() != rows || slot.cols() != cols || values.size() != rows * cols) {
        throw Error(ErrorCode::format, "parameter block '" + name + "' has corrupt shape");
      }
      slot = Tensor2(rows, cols, std::move(values));
      slot.set_requires_grad(true);
    }
    model.set_fixed_levels(doc.at("fixed_levels").get<std::vector<double>>());
    return model;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format, std::string("model file is malformed: ") + e.what());
  }
}

void save(const DdrModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::io, "cannot write model file " + path.string());
  }
  out << to_json_text(model);
  if (!out) {
    throw Error(ErrorCode::io, "failed writing model file " + path.string());
  }
}

DdrModel load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::io, "cannot open model file " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

DdrModel load(const std::filesystem::path& path, const ArchSpec& expected) {
  DdrModel model = load(path);
  if (model.arch() != expected) {
    throw Error(ErrorCode::incompatible,
                "model file " + path.string() + " was written for a different architecture");
  }
  return model;
}

}  // namespace ddr
