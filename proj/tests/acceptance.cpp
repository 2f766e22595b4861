#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "glaslab/harness.hpp"
#include "glaslab/observables.hpp"

using namespace glaslab;
namespace fs = std::filesystem;

namespace {

std::string out_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("glaslab_accept_" + tag);
  fs::remove_all(p);
  return p.string();
}

const ResultRecord* find_rec(const std::vector<ResultRecord>& rs, const std::string& obs,
                             int n = -1, const std::string& extra_sub = "") {
  for (const auto& r : rs) {
    if (r.observable != obs) continue;
    if (n >= 0 && r.n != n) continue;
    if (!extra_sub.empty() && r.extra.find(extra_sub) == std::string::npos) continue;
    return &r;
  }
  return nullptr;
}

void verdict(int idx, bool ok, const std::string& detail) {
  std::printf("ACCEPT %d %s: %s\n", idx, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  CHECK_MESSAGE(ok, "criterion ", idx, ": ", detail);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ExperimentConfig base_config() {
  ExperimentConfig cfg;
  cfg.dim = 1;
  cfg.model.beta = 0.5;
  cfg.model.h = 0.5;
  cfg.model.u = 1.0;
  cfg.model.r = 0.5;
  cfg.seed = 20260824;
  cfg.workers = 8;
  return cfg;
}

}  // namespace

TEST_CASE("criterion 1: sampler agrees with the exact oracle") {
  auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg = base_config();
  cfg.kind = "exact-audit";
  cfg.n_list = {1, 2, 3};
  cfg.replicas = 2;
  cfg.burn_in = 500;
  cfg.samples = 2000;
  cfg.thinning = 2;
  cfg.disorders = 1;
  cfg.out_dir = out_dir("c1");
  auto out = run_experiment(cfg);
  double secs = seconds_since(t0);

  const ResultRecord* comp = find_rec(out.records, "audit_comparisons");
  const ResultRecord* soft = find_rec(out.records, "audit_excursions_3to4");
  const ResultRecord* hard = find_rec(out.records, "audit_excursions_gt4");
  REQUIRE(comp != nullptr);
  REQUIRE(soft != nullptr);
  REQUIRE(hard != nullptr);
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "%.0f oracle comparisons, %.0f at 3-4 sigma, %.0f above 4 sigma, %.0fs",
                comp->value, soft->value, hard->value, secs);
  verdict(1, !out.acceptance_failed && secs < 120.0, buf);
}

TEST_CASE("criterion 2: integration-by-parts identity at n = 3") {
  auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg = base_config();
  cfg.kind = "ibp";
  cfg.n_list = {3};
  cfg.disorders = 500;
  cfg.use_exact = true;
  cfg.out_dir = out_dir("c2");
  auto out = run_experiment(cfg);
  double secs = seconds_since(t0);

  const ResultRecord* res = find_rec(out.records, "ibp_residual", 3);
  REQUIRE(res != nullptr);
  char buf[256];
  std::snprintf(buf, sizeof(buf), "residual %.3e +- %.3e (%.1f sigma), %.0fs",
                res->value, res->err, std::abs(res->value) / res->err, secs);
  verdict(2, std::abs(res->value) <= 3.0 * res->err && secs < 60.0, buf);
}

TEST_CASE("criterion 3: overlap variance vanishes with volume") {
  auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg = base_config();
  cfg.kind = "variance-scan";
  cfg.n_list = {4, 8, 16, 32};
  cfg.replicas = 2;
  cfg.burn_in = 500;
  cfg.samples = 2000;
  cfg.thinning = 2;
  cfg.disorders = 64;
  cfg.use_exact = false;
  cfg.out_dir = out_dir("c3");
  auto out = run_experiment(cfg);
  double secs = seconds_since(t0);

  std::vector<const ResultRecord*> ov;
  for (int n : cfg.n_list) {
    ov.push_back(find_rec(out.records, "overlap_variance", n));
    REQUIRE(ov.back() != nullptr);
  }
  int inversions = 0;
  for (size_t k = 0; k + 1 < ov.size(); ++k) {
    double joint = std::hypot(ov[k]->err, ov[k + 1]->err);
    if (!(ov[k]->value - ov[k + 1]->value > joint)) ++inversions;
  }
  const ResultRecord* slope = find_rec(out.records, "loglog_slope");
  REQUIRE(slope != nullptr);
  bool ok = inversions <= 1 && slope->value >= -1.5 && slope->value <= -0.3 &&
            secs < 1200.0;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "variance %.4f -> %.4f -> %.4f -> %.4f, slope %.3f +- %.3f, "
                "%d inversion(s), %.0fs",
                ov[0]->value, ov[1]->value, ov[2]->value, ov[3]->value, slope->value,
                slope->err, inversions, secs);
  verdict(3, ok, buf);
}

TEST_CASE("criterion 4: Ghirlanda-Guerra residual decays") {
  ExperimentConfig cfg = base_config();
  cfg.kind = "gg-scan";
  cfg.n_list = {4, 16};
  cfg.replicas = 3;
  cfg.gg_f = "clamp(R12)";
  cfg.gg_m = 2;
  cfg.burn_in = 500;
  cfg.samples = 2000;
  cfg.thinning = 2;
  cfg.disorders = 96;
  cfg.use_exact = false;
  cfg.out_dir = out_dir("c4");
  auto out = run_experiment(cfg);

  const ResultRecord* r4 = find_rec(out.records, "gg_residual[clamp(R12)]", 4);
  const ResultRecord* r16 = find_rec(out.records, "gg_residual[clamp(R12)]", 16);
  const ResultRecord* e4 = find_rec(out.records, "gg_residual[1]", 4);
  const ResultRecord* e16 = find_rec(out.records, "gg_residual[1]", 16);
  REQUIRE(r4 != nullptr);
  REQUIRE(r16 != nullptr);
  REQUIRE(e4 != nullptr);
  REQUIRE(e16 != nullptr);

  double joint = std::hypot(r4->err, r16->err);
  bool decays = std::abs(r4->value) - std::abs(r16->value) > joint;
  auto exch_ok = [](const ResultRecord* r) {
    return std::abs(r->value) <= std::max(2.0 * r->err, 1e-12);
  };
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "|residual| %.4f +- %.4f (n=4) vs %.4f +- %.4f (n=16); f=1 residual "
                "%.1e, %.1e",
                std::abs(r4->value), r4->err, std::abs(r16->value), r16->err, e4->value,
                e16->value);
  verdict(4, decays && exch_ok(e4) && exch_ok(e16), buf);
}

TEST_CASE("criterion 5: free-energy variance scales like 1/volume") {
  ExperimentConfig exact = base_config();
  exact.kind = "free-energy";
  exact.n_list = {2};
  exact.disorders = 200;
  exact.use_exact = true;
  exact.out_dir = out_dir("c5a");
  auto small = run_experiment(exact);

  ExperimentConfig thermo = base_config();
  thermo.kind = "free-energy";
  thermo.n_list = {4, 8};
  thermo.disorders = 200;
  thermo.use_exact = false;
  thermo.burn_in = 300;
  thermo.samples = 800;
  thermo.thinning = 2;
  thermo.out_dir = out_dir("c5b");
  auto large = run_experiment(thermo);

  std::vector<double> scaled;
  const ResultRecord* r2 = find_rec(small.records, "var_psi_times_V", 2);
  REQUIRE(r2 != nullptr);
  scaled.push_back(r2->value);
  for (int n : {4, 8}) {
    const ResultRecord* r = find_rec(large.records, "var_psi_times_V", n);
    REQUIRE(r != nullptr);
    scaled.push_back(r->value);
  }
  double lo = *std::min_element(scaled.begin(), scaled.end());
  double hi = *std::max_element(scaled.begin(), scaled.end());
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "Var(psi)*V = %.4f (n=2), %.4f (n=4), %.4f (n=8); spread factor %.2f",
                scaled[0], scaled[1], scaled[2], hi / lo);
  verdict(5, lo > 0.0 && hi / lo < 3.0, buf);
}

TEST_CASE("criterion 6: free energy is convex in the field strength") {
  ExperimentConfig cfg = base_config();
  cfg.kind = "free-energy";
  cfg.n_list = {2};
  cfg.h_grid = {0.2, 0.4, 0.6, 0.8, 1.0};
  cfg.disorders = 300;
  cfg.use_exact = true;
  cfg.out_dir = out_dir("c6");
  auto out = run_experiment(cfg);

  const ResultRecord* worst = find_rec(out.records, "worst_second_difference", 2);
  REQUIRE(worst != nullptr);
  char buf[256];
  std::snprintf(buf, sizeof(buf), "min second difference %.3e +- %.3e", worst->value,
                worst->err);
  verdict(6, worst->value >= -3.0 * worst->err, buf);
}

TEST_CASE("criterion 7: imaginary perturbation shifts psi at second order") {
  ExperimentConfig cfg = base_config();
  cfg.kind = "perturbation-audit";
  cfg.n_list = {1, 2, 3};
  cfg.pert.alpha = {{2, 1.0}};
  cfg.pert.mode = PertMode::imaginary_exact;
  cfg.c_list = {0.2, 0.1, 0.05, 0.025};
  cfg.disorders = 100;
  cfg.out_dir = out_dir("c7");
  auto out = run_experiment(cfg);

  bool ok = true;
  std::string detail;
  for (int n : cfg.n_list) {
    const ResultRecord* slope = find_rec(out.records, "pert_slope", n);
    REQUIRE(slope != nullptr);
    ok = ok && slope->value >= 1.7 && slope->value <= 2.3;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%sn=%d slope %.3f", detail.empty() ? "" : ", ", n,
                  slope->value);
    detail += buf;
  }
  verdict(7, ok, detail);
}

TEST_CASE("criterion 8: moment bounds are size-stable and match the free measure") {
  ExperimentConfig cfg = base_config();
  cfg.kind = "simulate";
  cfg.n_list = {8, 16};
  cfg.replicas = 2;
  cfg.burn_in = 500;
  cfg.samples = 2000;
  cfg.thinning = 2;
  cfg.disorders = 64;
  cfg.use_exact = false;
  cfg.out_dir = out_dir("c8");
  auto out = run_experiment(cfg);

  const ResultRecord* c8 = find_rec(out.records, "C4", 8);
  const ResultRecord* c16 = find_rec(out.records, "C4", 16);
  REQUIRE(c8 != nullptr);
  REQUIRE(c16 != nullptr);
  double rel = std::abs(c8->value - c16->value) / std::max(c8->value, c16->value);

  // closed-form cross-check of C_2 on the free single-site measure
  auto lat = build_lattice(1, 1);
  ModelParams free_p;
  free_p.beta = 0.0;
  free_p.h = 0.0;
  free_p.u = 1.0;
  free_p.r = 0.0;
  RNGSpec rng{cfg.seed};
  std::vector<std::vector<double>> rows;
  for (long i = 0; i < 16; ++i) {
    auto dis = sample_disorder(lat, PerturbationSpec::off_spec(), rng, i);
    auto chain = run_chain(lat, dis, free_p, PerturbationSpec::off_spec(), rng, i, 1,
                           500, 4000, 2);
    rows.push_back(site_moments_from_streams(chain.snapshots, 2));
  }
  Estimate c2 = moment_bound(rows);
  double ref = std::tgamma(0.75) / std::tgamma(0.25);
  double sigma = std::abs(c2.value - ref) / c2.err;

  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "C4 %.4f (n=8) vs %.4f (n=16), rel diff %.1f%%; free C2 %.5f vs "
                "%.5f (%.1f sigma)",
                c8->value, c16->value, 100.0 * rel, c2.value, ref, sigma);
  verdict(8, rel < 0.2 && sigma <= 3.0, buf);
}

TEST_CASE("criterion 9: records are bit-identical across worker counts") {
  ExperimentConfig cfg = base_config();
  cfg.kind = "variance-scan";
  cfg.n_list = {4, 8};
  cfg.replicas = 2;
  cfg.burn_in = 200;
  cfg.samples = 400;
  cfg.thinning = 2;
  cfg.disorders = 16;
  cfg.use_exact = false;
  cfg.workers = 1;
  cfg.out_dir = out_dir("c9a");
  auto a = run_experiment(cfg);

  cfg.workers = 8;
  cfg.out_dir = out_dir("c9b");
  auto b = run_experiment(cfg);

  bool ok = a.records == b.records && !a.records.empty();
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%zu records, workers 1 vs 8 %s", a.records.size(),
                ok ? "identical" : "differ");
  verdict(9, ok, buf);
}
