#ifndef GLASLAB_LATTICE_HPP
#define GLASLAB_LATTICE_HPP

#include <complex>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

namespace glaslab {

// Hypercubic lattice V = Z^d ∩ [1,n]^d with free boundaries.
// Sites are indexed row-major, coordinate 0 fastest.
struct LatticeSpec {
  int d = 1;
  int n = 1;
  long site_count = 1;
  std::vector<std::pair<int, int>> edges;   // unordered pairs (a < b), sorted
  std::vector<std::vector<int>> neighbors;  // adjacency list per site
};

LatticeSpec build_lattice(int d, int n);

struct ModelParams {
  double beta = 1.0;  // inverse temperature, >= 0
  double h = 1.0;     // random field strength, >= 0
  double u = 1.0;     // quartic coefficient, > 0
  double r = 0.0;     // quadratic coefficient
  void validate() const;
};

enum class XiLaw { gaussian, rademacher, uniform };
enum class PertMode { off, imaginary_exact, real_sampled };

// Mixed p-spin perturbation data: coefficients alpha_p for p in [2, p_max],
// the c_n rule, the law of the couplings xi, and the evaluation mode.
struct PerturbationSpec {
  std::map<int, double> alpha;  // p -> alpha_p, zero entries may be omitted
  int p_max = 3;
  double cn_exponent = 0.25;  // c_n = site_count^(-cn_exponent)
  double cn_override = 0.0;   // > 0 pins c_n to a fixed value (audit scans)
  XiLaw xi_law = XiLaw::gaussian;
  PertMode mode = PertMode::off;

  bool alpha_is_zero() const;
  double c_n(long site_count) const;
  void validate() const;

  static PerturbationSpec off_spec() { return PerturbationSpec{}; }
};

struct SpinConfig {
  std::vector<double> phi;

  explicit SpinConfig(long sites = 0) : phi(static_cast<size_t>(sites), 0.0) {}
  SpinConfig(std::initializer_list<double> v) : phi(v) {}
};

struct DisorderRealization;  // disorder.hpp

// H_n(phi; g) = -beta sum_{<xy>} phi_x phi_y - h sum_x g_x phi_x,
// each unordered edge counted once.
double base_hamiltonian(const SpinConfig& config, const std::vector<double>& g,
                        const ModelParams& params, const LatticeSpec& lattice);

// X_n = sum_p alpha_p 2^{-p} |V|^{-(p-1)/2} sum_{p-tuples} xi_x phi_{x_1}...phi_{x_p}.
// Real by construction; the imaginary unit is applied by the caller.
double perturbation_x(const SpinConfig& config, const DisorderRealization& disorder,
                      const PerturbationSpec& pert, const LatticeSpec& lattice);

// H^per: i*c_n*X_n (imaginary_exact), c_n*X_n (real_sampled), 0 (off).
std::complex<double> perturbation_hamiltonian(const SpinConfig& config,
                                              const DisorderRealization& disorder,
                                              const PerturbationSpec& pert,
                                              const LatticeSpec& lattice);

// H = H_n + u sum phi^4 - r sum phi^2 - H^per. Imaginary part is zero
// unless mode = imaginary_exact.
std::complex<double> full_hamiltonian(const SpinConfig& config,
                                      const DisorderRealization& disorder,
                                      const ModelParams& params,
                                      const PerturbationSpec& pert,
                                      const LatticeSpec& lattice);

// Real-mode Hamiltonian for the sampler; throws on imaginary_exact.
double full_hamiltonian_real(const SpinConfig& config, const DisorderRealization& disorder,
                             const ModelParams& params, const PerturbationSpec& pert,
                             const LatticeSpec& lattice);

// Coefficients of the single-site conditional density of phi_site:
// density ∝ exp(-u phi^4 + r phi^2 + b phi + sum_k higher[k] phi^k).
struct LocalConditional {
  double u = 0.0;
  double r = 0.0;
  double b = 0.0;
  std::map<int, double> higher;  // exponent -> coefficient (real_sampled p >= 3)
};

LocalConditional local_conditional_params(const SpinConfig& config,
                                          const DisorderRealization& disorder,
                                          const ModelParams& params,
                                          const PerturbationSpec& pert,
                                          const LatticeSpec& lattice, int site);

// H(phi with site <- new_value) - H(phi), without touching the full sums.
double energy_delta(const SpinConfig& config, const DisorderRealization& disorder,
                    const ModelParams& params, const PerturbationSpec& pert,
                    const LatticeSpec& lattice, int site, double new_value);

}  // namespace glaslab

#endif
