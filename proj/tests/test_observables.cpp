#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "glaslab/observables.hpp"

using namespace glaslab;

namespace {

DisorderRealization fixed_disorder(std::vector<double> g) {
  DisorderRealization d;
  d.g = std::move(g);
  return d;
}

}  // namespace

TEST_CASE("overlap and delta_n arithmetic") {
  SpinConfig ones{1.0, 1.0, 1.0};
  CHECK(overlap(ones, ones) == doctest::Approx(1.0));

  SpinConfig a{1.0, 2.0, 3.0};
  SpinConfig minus{-1.0, -2.0, -3.0};
  CHECK(overlap(a, minus) == doctest::Approx(-overlap(a, a)));

  SpinConfig b{1.0, 0.0, -1.0};
  CHECK(overlap(a, b) == doctest::Approx(-2.0 / 3.0));

  SpinConfig zero(3);
  CHECK(delta_n(zero, {1.0, 2.0, 3.0}) == 0.0);
  CHECK(delta_n(a, {1.0, 1.0, 1.0}) == doctest::Approx(2.0));
  SpinConfig two{2.0, 2.0};
  CHECK(delta_n(two, {1.0, -1.0}) == doctest::Approx(0.0));
}

TEST_CASE("overlap expression parsing and evaluation") {
  SpinConfig c1{1.0, 1.0};
  SpinConfig c2{2.0, 0.0};
  SpinConfig c3{0.0, 2.0};
  std::vector<const SpinConfig*> reps{&c1, &c2, &c3};

  auto one = parse_overlap_expr("1");
  CHECK(one.eval_snapshot(reps) == doctest::Approx(1.0));
  CHECK(one.max_replica() == 0);

  auto r12 = parse_overlap_expr("R12");
  CHECK(r12.eval_snapshot(reps) == doctest::Approx(1.0));  // (1*2 + 1*0)/2

  auto clamped = parse_overlap_expr("clamp(3*R12)");
  CHECK(clamped.eval_snapshot(reps) == doctest::Approx(1.0));  // 3 clamped to 1
  CHECK(clamped.clamp);

  auto poly = parse_overlap_expr("0.5*R12*R13 + R12");
  // R13 = (1*0 + 1*2)/2 = 1; 0.5*1*1 + 1 = 1.5
  CHECK(poly.eval_snapshot(reps) == doctest::Approx(1.5));
  CHECK(poly.max_replica() == 3);

  CHECK_THROWS_AS(parse_overlap_expr(""), std::invalid_argument);
  CHECK_THROWS_AS(parse_overlap_expr("R1"), std::invalid_argument);
}

TEST_CASE("stream summary matches the exact oracle") {
  auto lat = build_lattice(1, 2);
  RNGSpec rng{11};
  auto dis = sample_disorder(lat, PerturbationSpec::off_spec(), rng, 4);
  ModelParams p;
  p.beta = 0.5;
  p.h = 0.5;
  p.r = 0.4;
  ExactOracle oracle(lat, dis, p, PerturbationSpec::off_spec());
  DisorderSummary exact = summarize_oracle(oracle, dis.g);

  auto chain =
      run_chain(lat, dis, p, PerturbationSpec::off_spec(), rng, 4, 2, 500, 8000, 2);
  // chunked re-summaries give the estimator its own error bar
  const size_t kChunks = 10;
  std::vector<double> r11s, r12s, deltas;
  size_t chunk = chain.snapshots[0].size() / kChunks;
  for (size_t c = 0; c < kChunks; ++c) {
    std::vector<std::vector<SpinConfig>> part(2);
    for (int rep = 0; rep < 2; ++rep)
      part[rep].assign(chain.snapshots[rep].begin() + c * chunk,
                       chain.snapshots[rep].begin() + (c + 1) * chunk);
    DisorderSummary s = summarize_streams(lat, dis.g, part);
    r11s.push_back(s.r11);
    r12s.push_back(s.r12);
    deltas.push_back(s.delta);
  }
  auto check = [&](const std::vector<double>& v, double ref) {
    Estimate e = mean_with_error(v);
    CHECK(std::abs(e.value - ref) < 4.0 * e.err);
  };
  check(r11s, exact.r11);
  check(r12s, exact.r12);
  check(deltas, exact.delta);
}

TEST_CASE("estimators are invariant under replica relabeling") {
  auto lat = build_lattice(1, 3);
  RNGSpec rng{23};
  auto dis = sample_disorder(lat, PerturbationSpec::off_spec(), rng, 1);
  ModelParams p;
  p.beta = 0.5;
  p.h = 0.5;
  p.r = 0.3;
  auto chain =
      run_chain(lat, dis, p, PerturbationSpec::off_spec(), rng, 1, 3, 200, 300, 2);
  auto f = parse_overlap_expr("clamp(R12)");
  DisorderSummary a = summarize_streams(lat, dis.g, chain.snapshots, &f, 2);

  std::vector<std::vector<SpinConfig>> shuffled{chain.snapshots[2], chain.snapshots[0],
                                                chain.snapshots[1]};
  DisorderSummary b = summarize_streams(lat, dis.g, shuffled, &f, 2);
  CHECK(a.r11 == doctest::Approx(b.r11).epsilon(1e-12));
  CHECK(a.r12 == doctest::Approx(b.r12).epsilon(1e-12));
  CHECK(a.gg_f == doctest::Approx(b.gg_f).epsilon(1e-12));
  CHECK(a.gg_f_r1m1 == doctest::Approx(b.gg_f_r1m1).epsilon(1e-12));
  CHECK(a.gg_f_r1s[0] == doctest::Approx(b.gg_f_r1s[0]).epsilon(1e-12));
}

TEST_CASE("overlap_variance") {
  SUBCASE("constant synthetic input gives zero") {
    std::vector<DisorderSummary> rows(10);
    for (auto& r : rows) {
      r.r12 = 0.3;
      r.r12_sq = 0.09;
    }
    Estimate e = overlap_variance(rows);
    CHECK(std::abs(e.value) < 1e-14);
    CHECK(e.err < 1e-14);
  }
  SUBCASE("refuses a tiny ensemble") {
    std::vector<DisorderSummary> rows(7);
    CHECK_THROWS_AS(overlap_variance(rows), std::invalid_argument);
  }
  SUBCASE("free product measure gives m2^2 / |V|") {
    auto lat = build_lattice(1, 2);
    auto dis = fixed_disorder({0.0, 0.0});
    ModelParams p;
    p.beta = 0.0;
    p.h = 0.0;
    ExactOracle oracle(lat, dis, p, PerturbationSpec::off_spec());
    DisorderSummary s = summarize_oracle(oracle, dis.g);
    std::vector<DisorderSummary> rows(8, s);
    double m2 = std::tgamma(0.75) / std::tgamma(0.25);
    CHECK(overlap_variance(rows).value == doctest::Approx(m2 * m2 / 2.0).epsilon(1e-8));
  }
}

TEST_CASE("self-averaging gaps close algebraically") {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd;
  std::vector<DisorderSummary> rows(20);
  for (auto& r : rows) {
    r.r11 = 0.5 + 0.1 * nd(gen);
    r.r12 = 0.2 + 0.1 * nd(gen);
    r.r12_sq = r.r12 * r.r12 + std::abs(0.05 * nd(gen));
    r.delta = 0.1 * nd(gen);
    r.delta_sq = r.delta * r.delta + std::abs(0.02 * nd(gen));
  }
  SelfAveragingGaps g = self_averaging_gaps(rows);
  CHECK(g.closure_residual < 1e-10);
  CHECK(g.thermal_gap.value + g.disorder_gap.value ==
        doctest::Approx(g.total_variance.value).epsilon(1e-12));
}

TEST_CASE("GG residual") {
  auto lat = build_lattice(1, 3);
  RNGSpec rng{37};
  ModelParams p;
  p.beta = 0.5;
  p.h = 0.5;
  p.r = 0.3;

  SUBCASE("f = 1 vanishes by exchangeability") {
    auto f = parse_overlap_expr("1");
    std::vector<DisorderSummary> rows;
    for (long i = 0; i < 8; ++i) {
      auto dis = sample_disorder(lat, PerturbationSpec::off_spec(), rng, i);
      auto chain =
          run_chain(lat, dis, p, PerturbationSpec::off_spec(), rng, i, 3, 100, 100, 1);
      rows.push_back(summarize_streams(lat, dis.g, chain.snapshots, &f, 2));
    }
    // the symmetrized estimator cancels exactly, not just statistically
    CHECK(std::abs(gg_residual(rows).value) < 1e-12);
  }

  SUBCASE("f-spec beyond the first m replicas is rejected") {
    auto dis = sample_disorder(lat, PerturbationSpec::off_spec(), rng, 0);
    auto chain =
        run_chain(lat, dis, p, PerturbationSpec::off_spec(), rng, 0, 3, 50, 20, 1);
    auto bad = parse_overlap_expr("R13");
    CHECK_THROWS_AS(summarize_streams(lat, dis.g, chain.snapshots, &bad, 2),
                    std::invalid_argument);
  }

  SUBCASE("rows without a GG block are rejected") {
    std::vector<DisorderSummary> rows(8);
    CHECK_THROWS_AS(gg_residual(rows), std::invalid_argument);
  }
}

TEST_CASE("integration-by-parts residual") {
  SUBCASE("synthetic null case") {
    std::vector<DisorderSummary> rows(10);
    for (auto& r : rows) {
      r.r11 = 0.4;
      r.r12 = 0.4;  // r11 - r12 = 0
      r.delta = 0.0;
    }
    CHECK(std::abs(ibp_check(rows, 0.7).value) < 1e-14);
  }
  SUBCASE("oracle ensemble is statistically zero") {
    auto lat = build_lattice(1, 2);
    RNGSpec rng{41};
    ModelParams p;
    p.beta = 0.3;
    p.h = 0.5;
    p.r = 0.3;
    std::vector<DisorderSummary> rows;
    for (long i = 0; i < 200; ++i) {
      auto dis = sample_disorder(lat, PerturbationSpec::off_spec(), rng, i);
      ExactOracle oracle(lat, dis, p, PerturbationSpec::off_spec(), 32);
      rows.push_back(summarize_oracle(oracle, dis.g));
    }
    Estimate e = ibp_check(rows, p.h);
    CHECK(std::abs(e.value) < 3.0 * e.err);
  }
}

TEST_CASE("free energy estimators") {
  auto lat = build_lattice(1, 2);
  RNGSpec rng{53};
  auto dis = sample_disorder(lat, PerturbationSpec::off_spec(), rng, 6);
  ModelParams p;
  p.beta = 0.5;
  p.h = 0.5;
  p.r = 0.3;

  SUBCASE("beta = 0 free energy is pure quadrature") {
    ModelParams p0 = p;
    p0.beta = 0.0;
    ExactOracle oracle(lat, dis, p0, PerturbationSpec::off_spec());
    CHECK(free_energy_zero_beta(lat, dis.g, p0) ==
          doctest::Approx(oracle.free_energy().first).epsilon(1e-8));
  }

  SUBCASE("thermo integration matches the exact oracle") {
    std::vector<double> grid;
    for (int k = 0; k <= 10; ++k) grid.push_back(0.05 * k);
    auto t = free_energy_thermo(lat, dis, p, grid, rng, 6, 500, 4000, 2);
    ExactOracle oracle(lat, dis, p, PerturbationSpec::off_spec());
    double exact = oracle.free_energy().first;
    double sigma = 0.0;
    for (size_t k = 0; k + 1 < grid.size(); ++k) {
      double w = 0.5 * (grid[k + 1] - grid[k]);
      sigma += w * w * (t.integrand_err[k] * t.integrand_err[k] +
                        t.integrand_err[k + 1] * t.integrand_err[k + 1]);
    }
    sigma = std::sqrt(sigma);
    CHECK(std::abs(t.psi - exact) < 3.0 * sigma + 1e-4);
    CHECK_FALSE(t.grid_warning);
  }

  SUBCASE("grid validation") {
    CHECK_THROWS_AS(free_energy_thermo(lat, dis, p, {0.1, 0.5}, rng, 6, 10, 10, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(free_energy_thermo(lat, dis, p, {0.0}, rng, 6, 10, 10, 1),
                    std::invalid_argument);
  }
}

TEST_CASE("free-energy derivatives generate the conjugate observables") {
  auto lat = build_lattice(1, 2);
  RNGSpec rng{61};
  auto dis = sample_disorder(lat, PerturbationSpec::off_spec(), rng, 9);
  ModelParams p;
  p.beta = 0.6;
  p.h = 0.7;
  p.r = 0.2;
  const double eps = 0.05;

  auto psi_at = [&](double h, double r) {
    ModelParams q = p;
    q.h = h;
    q.r = r;
    ExactOracle oracle(lat, dis, q, PerturbationSpec::off_spec());
    return oracle.free_energy().first;
  };
  ExactOracle center(lat, dis, p, PerturbationSpec::off_spec());

  double dh = (psi_at(p.h + eps, p.r) - psi_at(p.h - eps, p.r)) / (2.0 * eps);
  CHECK(std::abs(dh - center.thermal_delta_n()) < 2.0 * eps * eps);

  double dr = (psi_at(p.h, p.r + eps) - psi_at(p.h, p.r - eps)) / (2.0 * eps);
  CHECK(std::abs(dr - center.thermal_r11()) < 2.0 * eps * eps);
}

TEST_CASE("convexity_check on synthetic input") {
  std::vector<Estimate> quad, lin;
  for (int k = 0; k < 5; ++k) {
    double h = 0.2 * (k + 1);
    quad.push_back({h * h, 0.0});
    lin.push_back({3.0 * h + 1.0, 0.0});
  }
  CHECK(convexity_check(quad).worst_second_difference ==
        doctest::Approx(2.0 * 0.2 * 0.2).epsilon(1e-9));
  CHECK(convexity_check(lin).worst_second_difference == doctest::Approx(0.0));
  std::vector<Estimate> two(2);
  CHECK_THROWS_AS(convexity_check(two), std::invalid_argument);
}

TEST_CASE("truncated correlation sum") {
  ModelParams p;
  p.beta = 0.0;
  p.h = 0.5;
  p.r = 0.3;
  RNGSpec rng{67};

  SUBCASE("product measure leaves only diagonal terms") {
    auto lat = build_lattice(1, 3);
    std::vector<CorrelationTensors> ens;
    std::vector<double> diag_mean(3, 0.0);
    const int kR = 20;
    for (long i = 0; i < kR; ++i) {
      auto dis = sample_disorder(lat, PerturbationSpec::off_spec(), rng, i);
      ExactOracle oracle(lat, dis, p, PerturbationSpec::off_spec(), 32);
      ens.push_back(oracle.correlation_tensors());
      for (int x = 0; x < 3; ++x)
        diag_mean[x] += ens.back().two_point[x][x] -
                        ens.back().one_point[x] * ens.back().one_point[x];
    }
    double expect = 0.0;
    for (double v : diag_mean) expect += (v / kR) * (v / kR);
    TruncatedCorrSum t = truncated_correlation_sum(ens);
    CHECK(t.sum == doctest::Approx(expect).epsilon(1e-9));
    CHECK(t.per_site_ratio == doctest::Approx(t.sum / 3.0));
  }

  SUBCASE("per-site ratio is stable across oracle sizes") {
    ModelParams q;
    q.beta = 0.5;
    q.h = 0.5;
    q.r = 0.3;
    std::vector<double> ratios;
    for (int n : {2, 3, 4}) {
      auto lat = build_lattice(1, n);
      std::vector<CorrelationTensors> ens;
      for (long i = 0; i < 25; ++i) {
        auto dis = sample_disorder(lat, PerturbationSpec::off_spec(), rng, i);
        ExactOracle oracle(lat, dis, q, PerturbationSpec::off_spec(), n == 4 ? 32 : 48);
        ens.push_back(oracle.correlation_tensors());
      }
      ratios.push_back(truncated_correlation_sum(ens).per_site_ratio);
    }
    double lo = *std::min_element(ratios.begin(), ratios.end());
    double hi = *std::max_element(ratios.begin(), ratios.end());
    CHECK(hi / lo < 2.0);
  }
}

TEST_CASE("moment bounds") {
  SUBCASE("k = 0 is identically one") {
    std::vector<std::vector<double>> rows(10, std::vector<double>(4, 1.0));
    Estimate e = moment_bound(rows);
    CHECK(e.value == doctest::Approx(1.0));
    CHECK(e.err < 1e-14);
  }
  SUBCASE("free measure second moment is the gamma ratio") {
    auto lat = build_lattice(1, 3);
    auto dis = fixed_disorder({0.0, 0.0, 0.0});
    ModelParams p;
    p.beta = 0.0;
    p.h = 0.0;
    ExactOracle oracle(lat, dis, p, PerturbationSpec::off_spec());
    auto t = oracle.correlation_tensors();
    std::vector<std::vector<double>> rows(8);
    for (auto& row : rows)
      for (int x = 0; x < 3; ++x) row.push_back(t.site_moments[x][2]);
    double m2 = std::tgamma(0.75) / std::tgamma(0.25);
    CHECK(moment_bound(rows).value == doctest::Approx(m2).epsilon(1e-8));
  }
  SUBCASE("site moments from streams count all replicas") {
    std::vector<std::vector<SpinConfig>> streams(2);
    streams[0] = {SpinConfig{1.0, 2.0}};
    streams[1] = {SpinConfig{3.0, 0.0}};
    auto m1 = site_moments_from_streams(streams, 1);
    CHECK(m1[0] == doctest::Approx(2.0));
    CHECK(m1[1] == doctest::Approx(1.0));
  }
}

TEST_CASE("jackknife error calibrates as 1/sqrt(R)") {
  std::mt19937_64 gen(71);
  std::normal_distribution<double> nd;
  auto se_of = [&](int count) {
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < count; ++i) rows.push_back({nd(gen)});
    return jackknife(rows, [](const std::vector<std::vector<double>>& r) {
             double s = 0.0;
             for (const auto& row : r) s += row[0];
             return s / static_cast<double>(r.size());
           })
        .err;
  };
  double a = se_of(400);
  double b = se_of(1600);
  CHECK(a / b == doctest::Approx(2.0).epsilon(0.3));
}
