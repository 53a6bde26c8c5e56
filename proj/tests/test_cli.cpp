// SPDX-License-Identifier: Apache-2.0

#include "ddr/cli.hpp"
#include "ddr/data.hpp"
#include "ddr/error.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <sstream>

using namespace ddr;
using namespace ddr::test;

namespace {

struct Outcome {
  int status = 0;
  std::string out;
  std::string err;
};

Outcome ddr_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ddr");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Outcome o;
  o.status = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> v;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) v.push_back(l);
  return v;
}

// A tiny network so each training call takes well under a second.
void write_small_config(const std::filesystem::path& p) {
  std::ofstream(p) << R"({"feature_widths": [8, 8], "regression_widths": [8], "epochs": 3,
                         "batch_size": 64, "patience": 0})";
}

struct Workspace {
  TempDir dir{"cli"};
  std::string data;
  std::string config;

  Workspace() {
    data = (dir / "train.csv").string();
    config = (dir / "small.json").string();
    REQUIRE(ddr_cli({"generate", "--family", "linear-constant", "--n", "300", "--seed", "1",
                     "--out", data})
                .status == 0);
    write_small_config(config);
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("generate is deterministic and writes the oracle sidecar") {
  TempDir dir("gen");
  const auto a = (dir / "a.csv").string();
  const auto b = (dir / "b.csv").string();
  for (const auto& p : {a, b}) {
    CHECK(ddr_cli({"generate", "--family", "quad-linear", "--n", "50", "--seed", "4", "--out", p}).status == 0);
  }
  CHECK(slurp(a) == slurp(b));
  CHECK(lines(slurp(a)).size() == 51);
  CHECK(read_oracle_sidecar(oracle_sidecar_path(a)).family == Family::quad_linear);
}

TEST_CASE("unknown family is a usage error listing the families") {
  TempDir dir("fam");
  const Outcome o = ddr_cli({"generate", "--family", "bogus", "--out", (dir / "x.csv").string()});
  CHECK(o.status == 2);
  CHECK(o.err.rfind("ddr: error: usage:", 0) == 0);
  CHECK(o.err.find("linear-constant") != std::string::npos);
  CHECK(o.err.find("sin-constant") != std::string::npos);
}

TEST_CASE("missing required options are usage errors") {
  const Outcome o = ddr_cli({"train", "--out", "m.ddr"});
  CHECK(o.status == 2);
  CHECK(o.err.find("ddr: error: usage:") == 0);
  CHECK(ddr_cli({}).status == 2);
  CHECK(ddr_cli({"--help"}).status == 0);
}

TEST_CASE("train, evaluate, predict and curves") {
  Workspace w;
  const auto model = w.path("m.ddr");
  const Outcome t = ddr_cli({"train", "--data", w.data, "--out", model, "--config", w.config});
  REQUIRE(t.status == 0);
  CHECK(std::filesystem::exists(model));
  const auto log = nlohmann::json::parse(slurp(model + ".log.json"));
  CHECK(log["mode"] == "ddr-joint");
  CHECK(log["config"]["epochs"] == 3);
  CHECK(lines(slurp(model + ".epochs.csv")).size() == 4);

  SUBCASE("evaluate reports oracle gaps and a consistent q_s") {
    const Outcome e = ddr_cli({"evaluate", "--model", model, "--data", w.data});
    REQUIRE(e.status == 0);
    const auto j = nlohmann::json::parse(e.out);
    CHECK(j.contains("oracle_gap"));
    double sum = 0.0;
    for (double v : j["per_decile"]) sum += v;
    CHECK(std::abs(j["q_s"].get<double>() - sum) <= 1e-12);
    CHECK(j["inference"] == "q-only");

    const Outcome d = ddr_cli({"evaluate", "--model", model, "--data", w.data, "--dual"});
    REQUIRE(d.status == 0);
    CHECK(nlohmann::json::parse(d.out)["inference"] == "dual");
  }

  SUBCASE("predict writes one column per level plus the mean") {
    const auto feats = w.path("x.csv");
    std::ofstream(feats) << "x1\n-0.5\n0\n0.5\n";
    const Outcome p = ddr_cli({"predict", "--model", model, "--data", feats, "--tau", "0.1,0.5,0.9"});
    REQUIRE(p.status == 0);
    const auto rows = lines(p.out);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0] == "x1,q10,q50,q90");
    CHECK(rows[2].rfind("0,", 0) == 0);

    const Outcome m = ddr_cli({"predict", "--model", model, "--data", feats, "--mean", "--n", "999",
                               "--cdf", "1"});
    REQUIRE(m.status == 0);
    CHECK(lines(m.out)[0] == "x1,q10,q50,q90,cdf_1,mean_trapz");
  }

  SUBCASE("curves") {
    const Outcome c = ddr_cli({"curves", "--model", model, "--grid", "101", "--tau", "0.1,0.9"});
    REQUIRE(c.status == 0);
    const auto rows = lines(c.out);
    CHECK(rows.size() == 102);
    CHECK(rows[0] == "x1,q10,q90");
  }
}

TEST_CASE("fixed-level baselines") {
  Workspace w;
  const auto model = w.path("b.ddr");
  REQUIRE(ddr_cli({"train", "--data", w.data, "--out", model, "--config", w.config, "--mode", "fcnn"}).status == 0);
  CHECK_FALSE(std::filesystem::exists(model));
  for (const char* s : {".q10", ".q50", ".q90"}) CHECK(std::filesystem::exists(model + s));
  CHECK(cli::load_models(model).size() == 9);

  CHECK(ddr_cli({"evaluate", "--model", model, "--data", w.data}).status == 0);
  const Outcome d = ddr_cli({"evaluate", "--model", model, "--data", w.data, "--dual"});
  CHECK(d.status == 1);
  CHECK(d.err.rfind("ddr: error: incompatible:", 0) == 0);
}

TEST_CASE("dual inference needs an F head") {
  Workspace w;
  const auto model = w.path("q.ddr");
  REQUIRE(ddr_cli({"train", "--data", w.data, "--out", model, "--config", w.config, "--mode", "ddr-q"}).status == 0);
  const Outcome d = ddr_cli({"evaluate", "--model", model, "--data", w.data, "--dual"});
  CHECK(d.status != 0);
  CHECK(d.err.find("without an F model") != std::string::npos);
}

TEST_CASE("flags override the config file") {
  Workspace w;
  const auto model = w.path("o.ddr");
  REQUIRE(ddr_cli({"train", "--data", w.data, "--out", model, "--config", w.config, "--epochs", "2",
                   "--seed", "5"})
              .status == 0);
  const auto log = nlohmann::json::parse(slurp(model + ".log.json"));
  CHECK(log["config"]["epochs"] == 2);
  CHECK(log["config"]["seed"] == 5);
  CHECK(log["config"]["batch_size"] == 64);

  std::ofstream(w.path("bad.json")) << R"({"epoch": 3})";
  const Outcome bad = ddr_cli({"train", "--data", w.data, "--out", model, "--config", w.path("bad.json")});
  CHECK(bad.status == 1);
  CHECK(bad.err.find("unknown key 'epoch'") != std::string::npos);
}

TEST_CASE("repeated training writes identical bytes") {
  Workspace w;
  const auto a = w.path("a.ddr");
  const auto b = w.path("b.ddr");
  for (const auto& p : {a, b}) {
    REQUIRE(ddr_cli({"train", "--data", w.data, "--out", p, "--config", w.config, "--seed", "3"}).status == 0);
  }
  CHECK(slurp(a) == slurp(b));
}

TEST_CASE("level labels and lists") {
  CHECK(cli::level_label(0.1) == "q10");
  CHECK(cli::level_label(0.025) == "q2.5");
  CHECK(cli::parse_level_list("0.1,0.9") == std::vector<double>{0.1, 0.9});
  CHECK_THROWS_AS(cli::parse_level_list("0.1,x"), Error);
}
