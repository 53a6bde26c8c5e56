// SPDX-License-Identifier: Apache-2.0

#include "ddr/cli.hpp"

#include "ddr/error.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

namespace ddr::cli {

namespace {

using json = nlohmann::json;

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error(ErrorCode::io, "write failed for '" + path.string() + "'");
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format, "'" + path.string() + "': " + e.what());
  }
}

template <class T>
void take(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw Error(ErrorCode::format, "config: unknown key '" + key + "' in " + where);
  }
}

std::filesystem::path with_suffix(std::filesystem::path p, const std::string& suffix) {
  p += suffix;
  return p;
}

std::string join_header(const std::vector<std::string>& cells) {
  std::string s;
  for (std::size_t i = 0; i < cells.size(); ++i) s += (i ? "," : "") + cells[i];
  return s;
}

// Options every command may carry through a config file.
struct CommonOptions {
  std::string target;
  double alpha = 0.5;
  std::size_t jobs = 1;
};

}  // namespace

std::string level_label(double tau) {
  const double pct = tau * 100.0;
  const double rounded = std::round(pct);
  if (std::abs(pct - rounded) < 1e-9) return "q" + std::to_string(static_cast<long long>(rounded));
  return "q" + format_double(pct);
}

std::vector<double> parse_level_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw Error(ErrorCode::usage, "not a number in list: '" + item + "'");
    }
  }
  if (out.empty()) throw Error(ErrorCode::usage, "empty list");
  return out;
}

void apply_config(TrainConfig& c, const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::format, "config: top level must be an object");
  try {
    reject_unknown(j,
                   {"mode", "feature_widths", "regression_widths", "injection", "projection_width",
                    "epochs", "batch_size", "patience", "validation_fraction", "seed", "optimizer",
                    "loss", "schedule", "sampler", "fixed_levels", "track_crossing", "target",
                    "alpha", "jobs", "replicates", "select_after_anneal"},
                   "top level");
    if (j.contains("mode")) c.mode = parse_train_mode(j.at("mode").get<std::string>());
    take(j, "feature_widths", c.feature_widths);
    take(j, "regression_widths", c.regression_widths);
    if (j.contains("injection")) c.injection = parse_injection_mode(j.at("injection").get<std::string>());
    take(j, "projection_width", c.projection_width);
    take(j, "epochs", c.epochs);
    take(j, "batch_size", c.batch_size);
    take(j, "patience", c.patience);
    take(j, "validation_fraction", c.validation_fraction);
    take(j, "seed", c.seed);
    take(j, "fixed_levels", c.fixed_levels);
    take(j, "track_crossing", c.track_crossing);
    take(j, "select_after_anneal", c.select_after_anneal);
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      reject_unknown(o, {"lr", "beta1", "beta2", "eps", "feature_every", "regression_every"}, "optimizer");
      take(o, "lr", c.optimizer.lr);
      take(o, "beta1", c.optimizer.beta1);
      take(o, "beta2", c.optimizer.beta2);
      take(o, "eps", c.optimizer.eps);
      take(o, "feature_every", c.optimizer.feature_every);
      take(o, "regression_every", c.optimizer.regression_every);
    }
    if (j.contains("loss")) {
      const auto& l = j.at("loss");
      reject_unknown(l, {"eps_tau", "eps_ytilde"}, "loss");
      take(l, "eps_tau", c.loss.eps_tau);
      take(l, "eps_ytilde", c.loss.eps_ytilde);
    }
    if (j.contains("schedule")) {
      for (const auto& [name, term] : j.at("schedule").items()) {
        auto& t = c.schedule[parse_loss_term(name)];
        reject_unknown(term, {"start", "end", "ramp"}, "schedule." + name);
        take(term, "start", t.start);
        take(term, "end", t.end);
        take(term, "ramp", t.ramp);
      }
    }
    if (j.contains("sampler")) {
      const auto& s = j.at("sampler");
      reject_unknown(s, {"tau_prior", "beta_a", "beta_b", "tau_anchors"}, "sampler");
      if (s.contains("tau_prior")) c.tau_prior = parse_tau_prior(s.at("tau_prior").get<std::string>());
      take(s, "beta_a", c.beta_a);
      take(s, "beta_b", c.beta_b);
      take(s, "tau_anchors", c.tau_anchors);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format, std::string("config: ") + e.what());
  }
}

json config_to_json(const TrainConfig& c) {
  json schedule;
  for (LossTerm t : kAllLossTerms) {
    const auto& s = c.schedule[t];
    schedule[std::string(to_string(t))] = {{"start", s.start}, {"end", s.end}, {"ramp", s.ramp}};
  }
  return json{{"mode", std::string(to_string(c.mode))},
              {"feature_widths", c.feature_widths},
              {"regression_widths", c.regression_widths},
              {"injection", std::string(to_string(c.injection))},
              {"projection_width", c.projection_width},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"patience", c.patience},
              {"validation_fraction", c.validation_fraction},
              {"seed", c.seed},
              {"optimizer",
               {{"lr", c.optimizer.lr},
                {"beta1", c.optimizer.beta1},
                {"beta2", c.optimizer.beta2},
                {"eps", c.optimizer.eps},
                {"feature_every", c.optimizer.feature_every},
                {"regression_every", c.optimizer.regression_every}}},
              {"loss", {{"eps_tau", c.loss.eps_tau}, {"eps_ytilde", c.loss.eps_ytilde}}},
              {"schedule", schedule},
              {"sampler",
               {{"tau_prior", std::string(to_string(c.tau_prior))},
                {"beta_a", c.beta_a},
                {"beta_b", c.beta_b},
                {"tau_anchors", c.tau_anchors}}},
              {"fixed_levels", c.fixed_levels},
              {"track_crossing", c.track_crossing},
              {"select_after_anneal", c.select_after_anneal}};
}

std::vector<std::filesystem::path> model_paths(const std::filesystem::path& out, TrainMode mode,
                                               const std::vector<double>& levels) {
  if (mode != TrainMode::fcnn) return {out};
  std::vector<std::filesystem::path> paths;
  for (double t : levels) paths.push_back(with_suffix(out, "." + level_label(t)));
  return paths;
}

std::vector<DdrModel> load_models(const std::filesystem::path& path) {
  if (std::filesystem::exists(path)) {
    std::vector<DdrModel> one;
    one.push_back(load(path));
    return one;
  }
  std::vector<DdrModel> family;
  for (double t : kDeciles) {
    const auto p = with_suffix(path, "." + level_label(t));
    if (std::filesystem::exists(p)) family.push_back(load(p));
  }
  if (family.empty()) throw Error(ErrorCode::io, "no model file at '" + path.string() + "'");
  return family;
}

Dataset load_feature_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path.string() + "'");
  std::stringstream text;
  std::string header;
  std::getline(in, header);
  // Appends a zero target column and hands the text to the regular parser.
  text << header << ",__target__\n";
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    text << line << ",0\n";
  }
  Dataset d = parse_csv(text, std::string("__target__"));
  d.target_name = "y";
  return d;
}

namespace {

struct Loaded {
  std::vector<DdrModel> models;
  bool fixed = false;
};

Loaded load_for_inference(const std::string& path) {
  Loaded l;
  l.models = load_models(path);
  l.fixed = !l.models.front().fixed_levels().empty();
  for (const auto& m : l.models) {
    if (m.stats() != l.models.front().stats()) {
      throw Error(ErrorCode::incompatible, "model family disagrees on standardization");
    }
  }
  return l;
}

std::unique_ptr<QuantilePredictor> make_predictor(const Loaded& l, InferenceMode mode, double alpha) {
  if (l.fixed) {
    if (mode != InferenceMode::q_only) {
      throw Error(ErrorCode::incompatible, "fixed-level models have no CDF head for dual inference");
    }
    std::vector<const DdrModel*> ptrs;
    for (const auto& m : l.models) ptrs.push_back(&m);
    return std::make_unique<FixedLevelPredictor>(std::move(ptrs));
  }
  if (mode != InferenceMode::q_only && !l.models.front().arch().cdf_head) {
    throw Error(ErrorCode::incompatible,
                "model was trained without an F model; dual inference is unavailable");
  }
  return std::make_unique<ModelPredictor>(l.models.front(), mode, alpha);
}

void save_training(const std::filesystem::path& out, const TrainConfig& config,
                   const TrainResult& result) {
  const auto paths = model_paths(out, config.mode, config.fixed_levels);
  for (std::size_t i = 0; i < paths.size(); ++i) save(result.models[i], paths[i]);
  json log = to_json(result.report);
  log["config"] = config_to_json(config);
  write_text(with_suffix(out, ".log.json"), log.dump(1) + "\n");
  write_text(with_suffix(out, ".epochs.csv"), epochs_csv(result.report));
}

int cmd_generate(const std::string& family, std::size_t n, std::uint64_t seed, double sigma,
                 const std::string& out, std::ostream& os) {
  SyntheticSpec spec;
  spec.family = parse_family(family);
  spec.n = n;
  spec.seed = seed;
  spec.sigma = sigma;
  const Dataset d = generate(spec);
  write_csv(out, d);
  write_oracle_sidecar(oracle_sidecar_path(out), spec);
  os << "wrote " << n << " rows to " << out << "\n";
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string out;
  std::size_t replicates = 1;
};

int cmd_train(const TrainArgs& args, TrainConfig config, const CommonOptions& common,
              std::ostream& os) {
  const Dataset raw = load_csv(args.data, common.target.empty() ? std::optional<std::string>()
                                                                  : common.target);
  if (args.replicates == 0) throw Error(ErrorCode::usage, "--replicates must be >= 1");

  std::vector<TrainConfig> configs;
  std::vector<std::filesystem::path> outs;
  for (std::size_t r = 0; r < args.replicates; ++r) {
    TrainConfig c = config;
    c.seed = config.seed + r;
    configs.push_back(c);
    outs.push_back(args.replicates == 1 ? std::filesystem::path(args.out)
                                        : with_suffix(args.out, ".seed" + std::to_string(c.seed)));
  }
  std::vector<std::optional<TrainResult>> results(configs.size());
  std::vector<std::string> failures(configs.size());
  std::mutex report_lock;
  auto run_one = [&](std::size_t i) {
    try {
      const Dataset d = prepare_dataset(raw, configs[i].validation_fraction, configs[i].seed);
      results[i] = train(d, configs[i]);
      save_training(outs[i], configs[i], *results[i]);
    } catch (const Error& e) {
      std::lock_guard<std::mutex> g(report_lock);
      failures[i] = std::string(to_string(e.code())) + ": " + e.what();
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(common.jobs, configs.size()));
  for (std::size_t start = 0; start < configs.size(); start += jobs) {
    std::vector<std::thread> pool;
    for (std::size_t i = start; i < std::min(configs.size(), start + jobs); ++i) {
      pool.emplace_back(run_one, i);
    }
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < failures.size(); ++i) {
    if (!failures[i].empty()) {
      throw Error(ErrorCode::bad_state, "replicate seed " + std::to_string(configs[i].seed) +
                                            " failed: " + failures[i]);
    }
  }
  for (const auto& w : raw.warnings) os << "warning: " << w << "\n";
  if (args.replicates > 1) {
    double sum = 0.0;
    double sq = 0.0;
    json runs = json::array();
    for (std::size_t i = 0; i < results.size(); ++i) {
      const double q = results[i]->report.selected_val_qs;
      sum += q;
      sq += q * q;
      runs.push_back({{"seed", configs[i].seed}, {"model", outs[i].string()}, {"val_q_s", q}});
    }
    const double n = static_cast<double>(results.size());
    const double mean = sum / n;
    const double sd = std::sqrt(std::max(0.0, (sq - n * mean * mean) / (n - 1.0)));
    write_text(with_suffix(args.out, ".summary.json"),
               json{{"runs", runs}, {"val_q_s_mean", mean}, {"val_q_s_std", sd}}.dump(1) + "\n");
  }
  for (std::size_t i = 0; i < results.size(); ++i) {
    os << "seed " << configs[i].seed << ": selected epoch " << results[i]->report.selected_epoch
       << ", validation q_s " << format_double(results[i]->report.selected_val_qs) << " -> "
       << outs[i].string() << "\n";
  }
  return 0;
}

struct EvalArgs {
  std::string model;
  std::string data;
  std::string out;
  std::string csv;
  std::string oracle;
  std::string select_dual;
  bool dual = false;
};

int cmd_evaluate(const EvalArgs& args, const CommonOptions& common, std::ostream& os) {
  const Loaded l = load_for_inference(args.model);
  const Standardization& stats = l.models.front().stats();
  const Dataset raw = load_csv(args.data, common.target.empty() ? std::optional<std::string>()
                                                                  : common.target);
  const Dataset test = apply_standardization(raw, stats);

  InferenceMode mode = args.dual ? InferenceMode::dual : InferenceMode::q_only;
  if (!args.select_dual.empty()) {
    if (l.fixed || !l.models.front().arch().cdf_head) {
      throw Error(ErrorCode::incompatible, "model was trained without an F model; cannot select dual inference");
    }
    const Dataset val = apply_standardization(load_csv(args.select_dual, common.target.empty()
                                                                            ? std::optional<std::string>()
                                                                            : common.target),
                                              stats);
    mode = select_inference_mode(l.models.front(), val.x, val.y, common.alpha);
  }
  const auto predictor = make_predictor(l, mode, common.alpha);
  std::optional<ModelHeads> heads;
  if (!l.fixed && l.models.front().arch().cdf_head) heads.emplace(l.models.front());

  std::filesystem::path oracle_path = args.oracle;
  if (oracle_path.empty() && std::filesystem::exists(oracle_sidecar_path(args.data))) {
    oracle_path = oracle_sidecar_path(args.data);
  }
  std::optional<OracleFn> oracle;
  if (!oracle_path.empty()) {
    const SyntheticSpec spec = read_oracle_sidecar(oracle_path);
    if (stats.input_dim() != 1) {
      throw Error(ErrorCode::incompatible, "oracle families have a single feature");
    }
    oracle = [spec, stats](double tau, std::span<const double> row) {
      const double x = row[0] * stats.x_std[0] + stats.x_mean[0];
      return stats.transform_y(oracle_quantile(spec.family, spec.sigma, tau, x));
    };
  }
  const EvalReport rep =
      evaluate(*predictor, heads ? &*heads : nullptr, test.x, test.y, {}, oracle ? &*oracle : nullptr);
  json j = to_json(rep);
  j["inference"] = std::string(to_string(mode));
  if (!args.out.empty()) {
    write_text(args.out, j.dump(1) + "\n");
  } else {
    os << j.dump(1) << "\n";
  }
  if (!args.csv.empty()) write_text(args.csv, csv_header(rep) + "\n" + csv_row(rep) + "\n");
  return 0;
}

struct PredictArgs {
  std::string model;
  std::string data;
  std::string out;
  std::string taus = "0.1,0.5,0.9";
  std::string cdf;
  bool mean = false;
  std::size_t n = 99;
  bool dual = false;
};

void emit(const std::string& out, const std::string& text, std::ostream& os) {
  if (out.empty()) {
    os << text;
  } else {
    write_text(out, text);
  }
}

int cmd_predict(const PredictArgs& args, const CommonOptions& common, std::ostream& os) {
  const Loaded l = load_for_inference(args.model);
  const Standardization& stats = l.models.front().stats();
  const Dataset raw = load_feature_csv(args.data);
  const Dataset feats = apply_standardization(raw, stats);
  const auto predictor = make_predictor(l, args.dual ? InferenceMode::dual : InferenceMode::q_only,
                                        common.alpha);
  const std::vector<double> taus = parse_level_list(args.taus);
  std::vector<std::string> header = stats.feature_names;
  std::vector<std::vector<double>> columns;
  for (double t : taus) {
    header.push_back(level_label(t));
    columns.push_back(stats.inverse_y(predictor->predict(t, feats.x)));
  }
  if (!args.cdf.empty()) {
    if (l.fixed || !l.models.front().arch().cdf_head) {
      throw Error(ErrorCode::incompatible, "model was trained without an F model; no CDF output");
    }
    for (double v : parse_level_list(args.cdf)) {
      header.push_back("cdf_" + format_double(v));
      columns.push_back(predict_cdf(l.models.front(), stats.transform_y(v), feats.x));
    }
  }
  if (args.mean) {
    if (l.fixed) throw Error(ErrorCode::incompatible, "fixed-level models cannot integrate the mean");
    header.push_back("mean_trapz");
    columns.push_back(stats.inverse_y(predict_mean(*predictor, feats.x, args.n)));
  }
  std::ostringstream text;
  text << join_header(header) << "\n";
  std::vector<std::size_t> source;
  for (const auto& name : stats.feature_names) {
    source.push_back(static_cast<std::size_t>(
        std::find(raw.feature_names.begin(), raw.feature_names.end(), name) - raw.feature_names.begin()));
  }
  for (std::size_t r = 0; r < feats.rows(); ++r) {
    for (std::size_t c = 0; c < source.size(); ++c) text << (c ? "," : "") << format_double(raw.x(r, source[c]));
    for (const auto& col : columns) text << ',' << format_double(col[r]);
    text << "\n";
  }
  emit(args.out, text.str(), os);
  return 0;
}

struct CurvesArgs {
  std::string model;
  std::string out;
  std::string taus = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";
  std::size_t grid = 101;
  std::optional<double> lo;
  std::optional<double> hi;
  std::string feature;
  bool dual = false;
};

int cmd_curves(const CurvesArgs& args, const CommonOptions& common, std::ostream& os) {
  const Loaded l = load_for_inference(args.model);
  const Standardization& stats = l.models.front().stats();
  if (args.grid < 2) throw Error(ErrorCode::usage, "--grid must be >= 2");
  std::size_t k = 0;
  if (!args.feature.empty()) {
    const auto it = std::find(stats.feature_names.begin(), stats.feature_names.end(), args.feature);
    if (it == stats.feature_names.end()) {
      throw Error(ErrorCode::usage, "model has no feature '" + args.feature + "'");
    }
    k = static_cast<std::size_t>(it - stats.feature_names.begin());
  }
  const double lo = args.lo.value_or(stats.x_mean[k] - 2.0 * stats.x_std[k]);
  const double hi = args.hi.value_or(stats.x_mean[k] + 2.0 * stats.x_std[k]);
  Tensor2 raw(args.grid, stats.input_dim());
  for (std::size_t r = 0; r < args.grid; ++r) {
    for (std::size_t c = 0; c < stats.input_dim(); ++c) raw(r, c) = stats.x_mean[c];
    raw(r, k) = lo + (hi - lo) * static_cast<double>(r) / static_cast<double>(args.grid - 1);
  }
  const Tensor2 x = stats.transform_x(raw);
  const auto predictor = make_predictor(l, args.dual ? InferenceMode::dual : InferenceMode::q_only,
                                        common.alpha);
  const std::vector<double> taus = parse_level_list(args.taus);
  std::vector<std::string> header{stats.feature_names[k]};
  std::vector<std::vector<double>> columns;
  for (double t : taus) {
    header.push_back(level_label(t));
    columns.push_back(stats.inverse_y(predictor->predict(t, x)));
  }
  std::ostringstream text;
  text << join_header(header) << "\n";
  for (std::size_t r = 0; r < args.grid; ++r) {
    text << format_double(raw(r, k));
    for (const auto& col : columns) text << ',' << format_double(col[r]);
    text << "\n";
  }
  emit(args.out, text.str(), os);
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deep distribution regression: joint quantile and CDF networks"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::string config_path;
  CommonOptions common;
  std::string mode_text;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--target", common.target, "target column (default: last column)");
    sub->add_option("--alpha", common.alpha, "dual-inference blend weight")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--jobs", common.jobs, "parallel seed replicates");
  };

  std::string family;
  std::size_t n_rows = 1000;
  double sigma = 0.3;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "write a synthetic dataset and its oracle sidecar");
  gen->add_option("--family", family, "linear-constant | linear-linear | quad-linear | sin-constant")
      ->required();
  gen->add_option("--n", n_rows, "rows")->check(CLI::PositiveNumber);
  gen->add_option("--seed", seed, "random seed");
  gen->add_option("--sigma", sigma, "noise scale");
  gen->add_option("--out", gen_out, "output CSV")->required();

  TrainArgs targs;
  std::optional<std::size_t> epochs, batch, patience;
  std::optional<double> lr;
  auto* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--data", targs.data, "training CSV")->required();
  tr->add_option("--out", targs.out, "model output path")->required();
  tr->add_option("--mode", mode_text, "ddr-joint | ddr-disjoint | ddr-q | fcnn | fcnn-joint");
  auto* seed_opt = tr->add_option("--seed", seed, "random seed");
  tr->add_option("--epochs", epochs, "maximum epochs");
  tr->add_option("--batch-size", batch, "minibatch size");
  tr->add_option("--patience", patience, "early-stopping patience in epochs");
  tr->add_option("--lr", lr, "learning rate");
  tr->add_option("--replicates", targs.replicates, "number of seeds (seed, seed+1, ...)");
  add_common(tr);

  EvalArgs eargs;
  auto* ev = app.add_subcommand("evaluate", "score a model on labelled data");
  ev->add_option("--model", eargs.model, "model path")->required();
  ev->add_option("--data", eargs.data, "test CSV")->required();
  ev->add_option("--out", eargs.out, "JSON report path (default: stdout)");
  ev->add_option("--csv", eargs.csv, "flat CSV report path");
  ev->add_option("--oracle", eargs.oracle, "oracle sidecar (default: <data>.oracle.json if present)");
  ev->add_flag("--dual", eargs.dual, "blend Q with the inverted F");
  ev->add_option("--select-dual", eargs.select_dual,
                 "validation CSV used to choose between direct and dual inference");
  add_common(ev);

  PredictArgs pargs;
  auto* pr = app.add_subcommand("predict", "predict quantiles, CDF values and the mean");
  pr->add_option("--model", pargs.model, "model path")->required();
  pr->add_option("--data", pargs.data, "feature CSV")->required();
  pr->add_option("--out", pargs.out, "output CSV (default: stdout)");
  pr->add_option("--tau", pargs.taus, "comma-separated percentiles");
  pr->add_option("--cdf", pargs.cdf, "comma-separated target values for F");
  pr->add_flag("--mean", pargs.mean, "add the trapezoidal mean column mean_trapz");
  pr->add_option("--n", pargs.n, "interior nodes of the mean grid")->check(CLI::Range(2, 1000000));
  pr->add_flag("--dual", pargs.dual, "blend Q with the inverted F");
  add_common(pr);

  CurvesArgs cargs;
  auto* cu = app.add_subcommand("curves", "quantile curves along one feature");
  cu->add_option("--model", cargs.model, "model path")->required();
  cu->add_option("--out", cargs.out, "output CSV (default: stdout)");
  cu->add_option("--tau", cargs.taus, "comma-separated percentiles");
  cu->add_option("--grid", cargs.grid, "grid points");
  cu->add_option("--lo", cargs.lo, "grid start (raw units)");
  cu->add_option("--hi", cargs.hi, "grid end (raw units)");
  cu->add_option("--feature", cargs.feature, "feature to vary (default: first)");
  cu->add_flag("--dual", cargs.dual, "blend Q with the inverted F");
  add_common(cu);

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      if (e.get_exit_code() == 0) {
        app.exit(e, out, err);
        return 0;
      }
      err << "ddr: error: usage: " << e.what() << "\n";
      return 2;
    }

    json cfg = json::object();
    if (!config_path.empty()) cfg = read_json_file(config_path);
    if (cfg.contains("target") && common.target.empty()) common.target = cfg["target"].get<std::string>();
    if (cfg.contains("alpha") && app.get_subcommands().front()->count("--alpha") == 0) {
      common.alpha = cfg["alpha"].get<double>();
    }
    if (cfg.contains("jobs") && app.get_subcommands().front()->count("--jobs") == 0) {
      common.jobs = cfg["jobs"].get<std::size_t>();
    }

    if (gen->parsed()) return cmd_generate(family, n_rows, seed, sigma, gen_out, out);
    if (tr->parsed()) {
      TrainConfig config;
      apply_config(config, cfg);
      if (cfg.contains("replicates") && tr->count("--replicates") == 0) {
        targs.replicates = cfg["replicates"].get<std::size_t>();
      }
      if (!mode_text.empty()) config.mode = parse_train_mode(mode_text);
      if (seed_opt->count() > 0) config.seed = seed;
      if (epochs) config.epochs = *epochs;
      if (batch) config.batch_size = *batch;
      if (patience) config.patience = *patience;
      if (lr) config.optimizer.lr = *lr;
      return cmd_train(targs, config, common, out);
    }
    if (ev->parsed()) return cmd_evaluate(eargs, common, out);
    if (pr->parsed()) return cmd_predict(pargs, common, out);
    if (cu->parsed()) return cmd_curves(cargs, common, out);
    return 2;
  } catch (const Error& e) {
    err << "ddr: error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return e.code() == ErrorCode::usage ? 2 : 1;
  } catch (const json::exception& e) {
    err << "ddr: error: format: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "ddr: error: internal: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace ddr::cli
