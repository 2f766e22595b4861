#ifndef GLASLAB_OBSERVABLES_HPP
#define GLASLAB_OBSERVABLES_HPP

#include <optional>
#include <string>
#include <vector>

#include "glaslab/oracle.hpp"
#include "glaslab/sampler.hpp"
#include "glaslab/stats.hpp"

namespace glaslab {

// R_{a,b} = (1/|V|) sum_x phi_x^a phi_x^b
double overlap(const SpinConfig& a, const SpinConfig& b);

// Delta_n = (1/|V|) sum_x g_x phi_x
double delta_n(const SpinConfig& config, const std::vector<double>& g);

// f-spec: a polynomial in the overlaps of the first m replicas, optionally
// clamped to [-1,1]. Replica indices are 1-based.
struct OverlapExpr {
  OverlapPoly poly;
  bool clamp = false;
  std::string tag;  // parseable form, used for result labels

  int max_replica() const;
  double eval(const std::vector<double>& phi_products,
              const std::vector<const SpinConfig*>& replicas) const;
  double eval_snapshot(const std::vector<const SpinConfig*>& replicas) const;
};

// "1", "R12", "clamp(R12)", "0.5*R12*R13 + R12"
OverlapExpr parse_overlap_expr(const std::string& text);

// Thermal means for one disorder realization, the rows the ensemble
// estimators fold over.
struct DisorderSummary {
  double r11 = 0.0;       // <R_{1,1}>
  double r12 = 0.0;       // <R_{1,2}>
  double r12_sq = 0.0;    // <R_{1,2}^2>
  double delta = 0.0;     // <Delta_n>
  double delta_sq = 0.0;  // <Delta_n^2>
  // Ghirlanda-Guerra block (present when an f-spec and m were supplied):
  bool has_gg = false;
  int gg_m = 0;
  double gg_f = 0.0;                 // <f>
  std::vector<double> gg_f_r1s;      // <f R_{1,s}>, s = 2..m
  double gg_f_r1m1 = 0.0;            // <f R_{1,m+1}>
};

// Thermal averages from replica sample streams. For the GG block the
// estimator is symmetrized over all replica-label permutations, so it is
// exactly invariant under shuffling the input streams.
DisorderSummary summarize_streams(const LatticeSpec& lattice, const std::vector<double>& g,
                                  const std::vector<std::vector<SpinConfig>>& streams,
                                  const OverlapExpr* f_spec = nullptr, int gg_m = 0);

// Exact inner expectations for oracle-sized lattices.
DisorderSummary summarize_oracle(ExactOracle& oracle, const std::vector<double>& g);

struct EnsembleStats {
  std::string observable;
  Estimate est;
  size_t ensemble_size = 0;
};

// E<(R_{1,2} - E<R_{1,2}>)^2> = E<R^2> - (E<R>)^2, jackknife over disorders.
Estimate overlap_variance(const std::vector<DisorderSummary>& rows);

struct SelfAveragingGaps {
  Estimate thermal_gap;        // E(<R^2> - <R>^2)
  Estimate disorder_gap;       // Var_disorder(<R>)
  Estimate total_variance;     // E<(R - E<R>)^2>
  double closure_residual;     // |total - thermal - disorder|
  Estimate delta_thermal_gap;  // E(<Delta^2> - <Delta>^2)
  Estimate delta_abs_gap;      // E|<Delta> - E<Delta>|
  Estimate r11_abs_gap;        // E|<R_{1,1}> - E<R_{1,1}>|
};

SelfAveragingGaps self_averaging_gaps(const std::vector<DisorderSummary>& rows);

// E<f R_{1,m+1}> - (1/m) E<f> E<R_{1,2}> - (1/m) sum_{s=2}^m E<f R_{1,s}>
Estimate gg_residual(const std::vector<DisorderSummary>& rows);

// E<Delta_n> - h (E<R_{1,1}> - E<R_{1,2}>); exact Gaussian identity, the
// residual must be statistically zero at every n.
Estimate ibp_check(const std::vector<DisorderSummary>& rows, double h);

// psi_n(0) by per-site quadrature with field b = h g_x (exact).
double free_energy_zero_beta(const LatticeSpec& lattice, const std::vector<double>& g,
                             const ModelParams& params);

struct ThermoIntegrationResult {
  double psi = 0.0;
  bool grid_warning = false;  // adjacent integrand estimates differ > 5 sigma
  std::vector<double> integrand;      // <sum_edges phi phi>/|V| per grid beta
  std::vector<double> integrand_err;
};

// psi_n(beta) = psi_n(0) + (1/|V|) int_0^beta <sum_edges phi phi> dbeta',
// composite trapezoid over MCMC estimates of the integrand; the beta = 0
// point is exact (product measure).
ThermoIntegrationResult free_energy_thermo(const LatticeSpec& lattice,
                                           const DisorderRealization& disorder,
                                           const ModelParams& params,
                                           const std::vector<double>& beta_grid,
                                           const RNGSpec& rng, long realization_index,
                                           int burn_in, int samples, int thinning);

struct ConvexityResult {
  double worst_second_difference = 0.0;
  double error = 0.0;  // propagated from the three point errors
};

// min over interior grid points of p(h-eps) - 2 p(h) + p(h+eps)
ConvexityResult convexity_check(const std::vector<Estimate>& p_of_h);

struct TruncatedCorrSum {
  double sum = 0.0;             // sum_{x,y} (E<phi_x;phi_y>)^2
  double per_site_ratio = 0.0;  // sum / |V_n|
};

TruncatedCorrSum truncated_correlation_sum(
    const std::vector<CorrelationTensors>& per_disorder);

// Per-site moments <phi_x^k> from a sample stream set (all replicas pooled).
std::vector<double> site_moments_from_streams(
    const std::vector<std::vector<SpinConfig>>& streams, int k);

// C_k(n) = max over sites of the disorder-averaged <phi_x^k>.
// rows[i][x] is disorder i's thermal <phi_x^k>.
Estimate moment_bound(const std::vector<std::vector<double>>& rows);

}  // namespace glaslab

#endif
