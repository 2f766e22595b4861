#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "glaslab/harness.hpp"

using namespace glaslab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("glaslab_test_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

ExperimentConfig small_config(const std::string& kind, const std::string& out) {
  ExperimentConfig cfg;
  cfg.kind = kind;
  cfg.n_list = {2, 3};
  cfg.model.beta = 0.5;
  cfg.model.h = 0.5;
  cfg.model.r = 0.3;
  cfg.replicas = 2;
  cfg.burn_in = 50;
  cfg.samples = 40;
  cfg.thinning = 1;
  cfg.disorders = 8;
  cfg.seed = 777;
  cfg.workers = 1;
  cfg.out_dir = out;
  return cfg;
}

}  // namespace

TEST_CASE("config JSON round trip is bit-identical") {
  ExperimentConfig cfg = small_config("variance-scan", "x");
  cfg.pert.alpha = {{2, 0.5}, {3, -0.25}};
  cfg.pert.mode = PertMode::real_sampled;
  cfg.pert.cn_exponent = 0.75;
  cfg.h_grid = {0.2, 0.4};
  cfg.beta_grid = {0.0, 0.25, 0.5};

  nlohmann::json j1 = cfg.to_json();
  ExperimentConfig back = ExperimentConfig::from_json(j1);
  nlohmann::json j2 = back.to_json();
  CHECK(j1 == j2);
}

TEST_CASE("validation errors name the offending field") {
  auto expect_mentions = [](ExperimentConfig cfg, const std::string& token) {
    try {
      cfg.validate();
      FAIL_CHECK("expected validate() to throw for ", token);
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find(token) != std::string::npos);
    }
  };
  ExperimentConfig base = small_config("simulate", "x");

  ExperimentConfig bad = base;
  bad.kind = "bogus";
  expect_mentions(bad, "kind");

  bad = base;
  bad.n_list.clear();
  expect_mentions(bad, "lattice.n_list");

  bad = base;
  bad.n_list = {400};  // 400 sites in d=2 squared... keep d=3 to breach the cap
  bad.dim = 3;
  expect_mentions(bad, "lattice.n_list");

  bad = base;
  bad.model.u = 0.0;
  expect_mentions(bad, "model");

  bad = base;
  bad.replicas = 0;
  expect_mentions(bad, "run.replicas");

  bad = base;
  bad.disorders = 0;
  expect_mentions(bad, "run.disorders");

  bad = base;
  bad.workers = 300;
  expect_mentions(bad, "run.workers");

  bad = base;
  bad.kind = "perturbation-audit";
  bad.n_list = {5};
  expect_mentions(bad, "lattice.n_list");

  bad = base;
  bad.kind = "perturbation-audit";
  bad.n_list = {2};
  bad.c_list.clear();
  expect_mentions(bad, "pert_audit.c_list");
}

TEST_CASE("fit_scaling") {
  std::vector<long> v{4, 8, 16, 32};
  SUBCASE("pure 1/V decay has slope -1") {
    std::vector<double> vals, errs;
    for (long n : v) {
      vals.push_back(3.0 / static_cast<double>(n));
      errs.push_back(0.01);
    }
    ScalingFit f = fit_scaling(v, vals, errs);
    CHECK(f.slope == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(f.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-9));
  }
  SUBCASE("constant data has slope 0") {
    std::vector<double> vals(4, 0.7), errs(4, 0.01);
    CHECK(fit_scaling(v, vals, errs).slope == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("input validation") {
    CHECK_THROWS_AS(fit_scaling({4, 8}, {1.0, 0.5}, {0.1, 0.1}), std::invalid_argument);
    CHECK_THROWS_AS(fit_scaling(v, {1.0, 0.5, 0.0, 0.1}, {0.1, 0.1, 0.1, 0.1}),
                    std::invalid_argument);
  }
}

TEST_CASE("run_experiment is deterministic and worker-invariant") {
  TempDir d1("det1"), d2("det2"), d3("det3");
  ExperimentConfig cfg = small_config("variance-scan", d1.str());
  auto a = run_experiment(cfg);
  REQUIRE(!a.records.empty());

  cfg.out_dir = d2.str();
  auto b = run_experiment(cfg);
  CHECK(a.records == b.records);

  cfg.out_dir = d3.str();
  cfg.workers = 8;
  auto c = run_experiment(cfg);
  CHECK(a.records == c.records);
}

TEST_CASE("checkpoint resume reproduces the uninterrupted run") {
  TempDir full("ckpt_full"), part("ckpt_part");
  ExperimentConfig cfg = small_config("simulate", full.str());
  auto ref = run_experiment(cfg);

  cfg.out_dir = part.str();
  run_experiment(cfg);
  // keep only half the checkpoint, drop the reports, rerun
  fs::path ck = part.path / "checkpoint.jsonl";
  std::vector<std::string> lines;
  {
    std::ifstream in(ck);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) lines.push_back(line);
  }
  REQUIRE(lines.size() >= 4);
  {
    std::ofstream out(ck, std::ios::trunc);
    for (size_t i = 0; i < lines.size() / 2; ++i) out << lines[i] << "\n";
  }
  fs::remove(part.path / "records.json");
  fs::remove(part.path / "records.csv");
  auto resumed = run_experiment(cfg);
  CHECK(ref.records == resumed.records);
}

TEST_CASE("report files round trip") {
  TempDir dir("report");
  std::vector<ResultRecord> recs(2);
  recs[0].kind = "simulate";
  recs[0].beta = 0.5;
  recs[0].h = 0.25;
  recs[0].u = 1.0;
  recs[0].r = -0.125;
  recs[0].n = 4;
  recs[0].observable = "R12";
  recs[0].value = 0.123456789012345678;
  recs[0].err = 1e-3;
  recs[0].ensemble = 64;
  recs[0].seed = 42;
  recs[1] = recs[0];
  recs[1].extra = "c=0.1";
  recs[1].observable = "pert_gap";

  emit_report(recs, dir.str());
  auto from_json = read_records_json(dir.str() + "/records.json");
  CHECK(from_json == recs);
  auto from_csv = parse_records_csv(dir.str() + "/records.csv");
  CHECK(from_csv == recs);

  SUBCASE("empty record set still writes valid files") {
    TempDir empty("report_empty");
    emit_report({}, empty.str());
    CHECK(read_records_json(empty.str() + "/records.json").empty());
    CHECK(parse_records_csv(empty.str() + "/records.csv").empty());
  }

  SUBCASE("schema mismatch is rejected") {
    std::string bad = dir.str() + "/bad.json";
    std::ofstream(bad) << "{\"schema\": \"other-schema-9\", \"records\": []}\n";
    CHECK_THROWS_AS(read_records_json(bad), std::runtime_error);
  }
}

TEST_CASE("scaling records appear for multi-size scans") {
  TempDir dir("scanfit");
  ExperimentConfig cfg = small_config("variance-scan", dir.str());
  cfg.n_list = {2, 3, 4};
  auto out = run_experiment(cfg);
  int slopes = 0, variances = 0;
  for (const auto& r : out.records) {
    if (r.observable == "loglog_slope") ++slopes;
    if (r.observable == "overlap_variance") ++variances;
  }
  CHECK(slopes == 1);
  CHECK(variances == 3);
  CHECK(fs::exists(dir.path / "records.json"));
  CHECK(fs::exists(dir.path / "records.csv"));
}

TEST_CASE("exact-audit reports a verdict") {
  TempDir dir("audit");
  ExperimentConfig cfg = small_config("exact-audit", dir.str());
  cfg.n_list = {2};
  cfg.samples = 400;
  cfg.burn_in = 200;
  cfg.thinning = 2;
  auto out = run_experiment(cfg);
  CHECK_FALSE(out.acceptance_failed);
  bool saw_pass = false;
  for (const auto& r : out.records)
    if (r.observable == "audit_pass") {
      saw_pass = true;
      CHECK(r.value == 1.0);
    }
  CHECK(saw_pass);
}
