#ifndef GLASLAB_ORACLE_HPP
#define GLASLAB_ORACLE_HPP

#include <array>
#include <complex>
#include <map>
#include <vector>

#include "glaslab/disorder.hpp"
#include "glaslab/lattice.hpp"

namespace glaslab {

constexpr long kOracleSiteCap = 4;
constexpr int kOracleDefaultNodes = 64;

// Symmetric Gauss-Legendre rule on [-L, L]; L is chosen from (u, r, bmax)
// so the truncated tail of exp(-u phi^4 + r phi^2 + b phi) is below 1e-12
// of the central mass, polynomial factors up to phi^16 included.
struct QuadratureGrid {
  int node_count = 0;
  double cutoff = 0.0;
  std::vector<double> nodes;
  std::vector<double> weights;
};

double quadrature_cutoff(double u, double r, double bmax);
QuadratureGrid make_quadrature_grid(double u, double r, double bmax,
                                    int node_count = kOracleDefaultNodes);

// Unnormalized single-site integrals over exp(-u phi^4 + r phi^2 + b phi).
// Both carry the doubling self-convergence certificate: the M and 2M node
// results must agree to 1e-9 relative or they throw.
double single_site_log_z(double u, double r, double b, int node_count = kOracleDefaultNodes);
double single_site_moment(double u, double r, double b, int k,
                          int node_count = kOracleDefaultNodes);

struct ComplexExpectation {
  std::complex<double> value{0.0, 0.0};
  double quad_error = 0.0;
};

struct CorrelationTensors {
  std::vector<double> one_point;               // <phi_x>
  std::vector<std::vector<double>> two_point;  // <phi_x phi_y>
  std::vector<std::array<double, 9>> site_moments;  // <phi_x^k>, k = 0..8
};

// A polynomial observable in the site spins: sum of coeff * prod phi_x^k.
struct SiteMonomial {
  double coeff = 1.0;
  std::map<int, int> powers;  // site -> exponent
};
using SitePolynomial = std::vector<SiteMonomial>;

// A polynomial in replica overlaps: sum of coeff * prod R_{a,b}; replica
// indices are 1-based. Products of at most two overlap factors per term.
struct OverlapTerm {
  double coeff = 1.0;
  std::vector<std::pair<int, int>> factors;
};
using OverlapPoly = std::vector<OverlapTerm>;

// Deterministic quadrature engine for lattices of at most 4 sites. All
// expectations are full tensor-grid sums in fixed order; results for a
// given input are bit-stable.
class ExactOracle {
 public:
  ExactOracle(const LatticeSpec& lattice, const DisorderRealization& disorder,
              const ModelParams& params, const PerturbationSpec& pert,
              int node_count = kOracleDefaultNodes);

  ComplexExpectation partition_function();

  // (psi real part, psi imaginary part); throws when Z cancels to within
  // quadrature error of zero.
  std::pair<double, double> free_energy();

  // <prod_x phi_x^powers[x]> under the single-replica Gibbs measure.
  std::complex<double> expect_monomial(const std::map<int, int>& powers);
  ComplexExpectation expect_polynomial(const SitePolynomial& obs);

  // One- and two-point functions plus per-site even moments up to k = 8.
  // Real modes only.
  CorrelationTensors correlation_tensors();

  // Expectation of a polynomial in overlaps of m replicas, assembled from
  // single-replica moments via conditional independence of replicas.
  ComplexExpectation replica_observable(const OverlapPoly& spec);

  // Batch a set of monomials into one grid pass before reading them.
  void prefetch(const std::vector<std::map<int, int>>& monomials);

  // Convenience wrappers used throughout the test harness.
  double thermal_r11();      // <R_{1,1}>
  double thermal_r12();      // <R_{1,2}>
  double thermal_delta_n();  // <Delta_n>

  const LatticeSpec& lattice() const { return lattice_; }

 private:
  void run_pass(const std::vector<std::map<int, int>>& monomials);
  void ensure_z();

  const LatticeSpec& lattice_;
  const DisorderRealization& disorder_;
  ModelParams params_;
  PerturbationSpec pert_;
  int node_count_;
  QuadratureGrid grid_;
  bool have_z_ = false;
  std::complex<double> z_{0.0, 0.0};
  double abs_weight_sum_ = 0.0;  // scale for cancellation diagnostics
  std::map<std::vector<int>, std::complex<double>> moment_cache_;
};

}  // namespace glaslab

#endif
