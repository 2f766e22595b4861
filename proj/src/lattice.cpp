#include "glaslab/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "glaslab/disorder.hpp"

namespace glaslab {

LatticeSpec build_lattice(int d, int n) {
  if (d < 1 || n < 1) throw std::invalid_argument("build_lattice: d and n must be >= 1");
  // site_count = n^d must fit comfortably in a long
  double log_sites = d * std::log(static_cast<double>(n));
  if (log_sites > std::log(1e15))
    throw std::invalid_argument("build_lattice: n^d overflows site indexing");

  LatticeSpec lat;
  lat.d = d;
  lat.n = n;
  lat.site_count = 1;
  for (int k = 0; k < d; ++k) lat.site_count *= n;

  lat.neighbors.resize(static_cast<size_t>(lat.site_count));
  // stride of dimension k is n^k; coordinate 0 varies fastest
  long stride = 1;
  for (int k = 0; k < d; ++k) {
    for (long s = 0; s < lat.site_count; ++s) {
      long coord = (s / stride) % n;
      if (coord + 1 < n) {
        int a = static_cast<int>(s);
        int b = static_cast<int>(s + stride);
        lat.edges.emplace_back(a, b);
        lat.neighbors[a].push_back(b);
        lat.neighbors[b].push_back(a);
      }
    }
    stride *= n;
  }
  std::sort(lat.edges.begin(), lat.edges.end());
  for (auto& nb : lat.neighbors) std::sort(nb.begin(), nb.end());
  return lat;
}

void ModelParams::validate() const {
  if (!(beta >= 0.0)) throw std::invalid_argument("ModelParams: beta must be >= 0");
  if (!(h >= 0.0)) throw std::invalid_argument("ModelParams: h must be >= 0");
  if (!(u > 0.0)) throw std::invalid_argument("ModelParams: u must be > 0");
  if (!std::isfinite(r)) throw std::invalid_argument("ModelParams: r must be finite");
}

bool PerturbationSpec::alpha_is_zero() const {
  for (const auto& [p, a] : alpha)
    if (a != 0.0) return false;
  return true;
}

double PerturbationSpec::c_n(long site_count) const {
  if (mode == PertMode::off || alpha_is_zero()) return 0.0;
  if (cn_override > 0.0) return cn_override;
  return std::pow(static_cast<double>(site_count), -cn_exponent);
}

void PerturbationSpec::validate() const {
  if (p_max < 2) throw std::invalid_argument("PerturbationSpec: p_max must be >= 2");
  for (const auto& [p, a] : alpha) {
    if (p < 2 || p > p_max)
      throw std::invalid_argument("PerturbationSpec: alpha support must lie in [2, p_max]");
    if (std::abs(a) > 1.0)
      throw std::invalid_argument("PerturbationSpec: |alpha_p| must be <= 1");
  }
  if (!(cn_exponent > 0.0))
    throw std::invalid_argument("PerturbationSpec: cn_exponent must be > 0 (c_n must vanish)");
  bool zero = alpha_is_zero();
  if (mode == PertMode::off && !zero)
    throw std::invalid_argument("PerturbationSpec: mode=off requires alpha == 0");
  if (mode != PertMode::off && zero)
    throw std::invalid_argument("PerturbationSpec: nonzero alpha required unless mode=off");
}

double base_hamiltonian(const SpinConfig& config, const std::vector<double>& g,
                        const ModelParams& params, const LatticeSpec& lattice) {
  const auto& phi = config.phi;
  double pair_sum = 0.0;
  for (const auto& [a, b] : lattice.edges) pair_sum += phi[a] * phi[b];
  double field_sum = 0.0;
  for (long x = 0; x < lattice.site_count; ++x) field_sum += g[x] * phi[x];
  return -params.beta * pair_sum - params.h * field_sum;
}

namespace {

// sum over all p-tuples of xi_x phi_{x_1}...phi_{x_p}, full-tuple convention
double pspin_sum(const std::vector<double>& phi, const XiTensor& xi, long sc, int p) {
  std::vector<int> tuple(static_cast<size_t>(p), 0);
  double sum = 0.0;
  long total = xi.entry_count();
  for (long flat = 0; flat < total; ++flat) {
    long rem = flat;
    double prod = 1.0;
    for (int l = 0; l < p; ++l) {
      prod *= phi[rem % sc];
      rem /= sc;
    }
    sum += xi.at(flat) * prod;
  }
  return sum;
}

}  // namespace

double perturbation_x(const SpinConfig& config, const DisorderRealization& disorder,
                      const PerturbationSpec& pert, const LatticeSpec& lattice) {
  if (pert.mode == PertMode::off || pert.alpha_is_zero()) return 0.0;
  const long sc = lattice.site_count;
  double x = 0.0;
  for (const auto& [p, a] : pert.alpha) {
    if (a == 0.0) continue;
    auto it = disorder.xi.find(p);
    if (it == disorder.xi.end())
      throw std::runtime_error("perturbation_x: xi tensor missing for p=" + std::to_string(p));
    double norm = std::pow(static_cast<double>(sc), -0.5 * (p - 1));
    x += a * std::ldexp(1.0, -p) * norm * pspin_sum(config.phi, it->second, sc, p);
  }
  return x;
}

std::complex<double> perturbation_hamiltonian(const SpinConfig& config,
                                              const DisorderRealization& disorder,
                                              const PerturbationSpec& pert,
                                              const LatticeSpec& lattice) {
  if (pert.mode == PertMode::off) return {0.0, 0.0};
  if (pert.mode == PertMode::imaginary_exact && lattice.site_count > 4)
    throw std::invalid_argument(
        "perturbation_hamiltonian: imaginary_exact is limited to oracle-sized lattices");
  double cx = pert.c_n(lattice.site_count) *
              perturbation_x(config, disorder, pert, lattice);
  if (pert.mode == PertMode::imaginary_exact) return {0.0, cx};
  return {cx, 0.0};
}

std::complex<double> full_hamiltonian(const SpinConfig& config,
                                      const DisorderRealization& disorder,
                                      const ModelParams& params,
                                      const PerturbationSpec& pert,
                                      const LatticeSpec& lattice) {
  double local = 0.0;
  for (long x = 0; x < lattice.site_count; ++x) {
    double v = config.phi[x];
    double v2 = v * v;
    local += params.u * v2 * v2 - params.r * v2;
  }
  std::complex<double> hper = perturbation_hamiltonian(config, disorder, pert, lattice);
  return base_hamiltonian(config, disorder.g, params, lattice) + local - hper;
}

double full_hamiltonian_real(const SpinConfig& config, const DisorderRealization& disorder,
                             const ModelParams& params, const PerturbationSpec& pert,
                             const LatticeSpec& lattice) {
  if (pert.mode == PertMode::imaginary_exact)
    throw std::invalid_argument("full_hamiltonian_real: complex weight (imaginary_exact)");
  return full_hamiltonian(config, disorder, params, pert, lattice).real();
}

namespace {

// Coefficients of phi_site^m, m = 1..p, collected from all p-tuples that
// touch the site. Cost: one pass over the tuples containing the site.
void collect_pspin_site_poly(const std::vector<double>& phi, const XiTensor& xi, long sc,
                             int p, int site, double prefac, std::map<int, double>& poly) {
  if (p == 2) {
    // row + column scan, O(site_count) instead of a full tuple pass
    double lin = 0.0;
    for (long y = 0; y < sc; ++y) {
      if (y == site) continue;
      lin += (xi.at(site + sc * y) + xi.at(y + sc * site)) * phi[y];
    }
    poly[1] += prefac * lin;
    poly[2] += prefac * xi.at(site + sc * site);
    return;
  }
  long total = xi.entry_count();
  for (long flat = 0; flat < total; ++flat) {
    long rem = flat;
    int mult = 0;
    double rest = 1.0;
    for (int l = 0; l < p; ++l) {
      long x = rem % sc;
      rem /= sc;
      if (x == site)
        ++mult;
      else
        rest *= phi[x];
    }
    if (mult == 0) continue;
    poly[mult] += prefac * xi.at(flat) * rest;
  }
}

}  // namespace

LocalConditional local_conditional_params(const SpinConfig& config,
                                          const DisorderRealization& disorder,
                                          const ModelParams& params,
                                          const PerturbationSpec& pert,
                                          const LatticeSpec& lattice, int site) {
  if (pert.mode == PertMode::imaginary_exact)
    throw std::invalid_argument("local_conditional_params: no real conditional in imaginary_exact");

  LocalConditional lc;
  lc.u = params.u;
  lc.r = params.r;
  double nb_sum = 0.0;
  for (int y : lattice.neighbors[site]) nb_sum += config.phi[y];
  lc.b = params.beta * nb_sum + params.h * disorder.g[site];

  if (pert.mode == PertMode::real_sampled && !pert.alpha_is_zero()) {
    const long sc = lattice.site_count;
    double cn = pert.c_n(sc);
    std::map<int, double> poly;
    for (const auto& [p, a] : pert.alpha) {
      if (a == 0.0) continue;
      double norm = std::pow(static_cast<double>(sc), -0.5 * (p - 1));
      collect_pspin_site_poly(config.phi, disorder.xi.at(p), sc, p, site,
                              cn * a * std::ldexp(1.0, -p) * norm, poly);
    }
    // -H contributes +c_n X, so the collected coefficients add directly
    for (const auto& [m, c] : poly) {
      if (m == 1)
        lc.b += c;
      else if (m == 2)
        lc.r += c;
      else if (m == 4)
        lc.u -= c;
      else
        lc.higher[m] += c;
    }
  }
  return lc;
}

double energy_delta(const SpinConfig& config, const DisorderRealization& disorder,
                    const ModelParams& params, const PerturbationSpec& pert,
                    const LatticeSpec& lattice, int site, double new_value) {
  if (pert.mode == PertMode::imaginary_exact)
    throw std::invalid_argument("energy_delta: no real energy in imaginary_exact");
  double old_v = config.phi[site];
  double dv = new_value - old_v;
  if (dv == 0.0) return 0.0;

  double nb_sum = 0.0;
  for (int y : lattice.neighbors[site]) nb_sum += config.phi[y];
  double o2 = old_v * old_v, n2 = new_value * new_value;
  double delta = -params.beta * dv * nb_sum - params.h * disorder.g[site] * dv +
                 params.u * (n2 * n2 - o2 * o2) - params.r * (n2 - o2);

  if (pert.mode == PertMode::real_sampled && !pert.alpha_is_zero()) {
    // -H^per changes by -c_n * sum_m coeff_m (phi'^m - phi^m), restricted to
    // tuples through the site; local_conditional_params already folds the
    // c_n and sign conventions for us.
    const long sc = lattice.site_count;
    double cn = pert.c_n(sc);
    std::map<int, double> poly;
    for (const auto& [p, a] : pert.alpha) {
      if (a == 0.0) continue;
      double norm = std::pow(static_cast<double>(sc), -0.5 * (p - 1));
      collect_pspin_site_poly(config.phi, disorder.xi.at(p), sc, p, site,
                              cn * a * std::ldexp(1.0, -p) * norm, poly);
    }
    for (const auto& [m, c] : poly)
      delta -= c * (std::pow(new_value, m) - std::pow(old_v, m));
  }
  return delta;
}

}  // namespace glaslab
