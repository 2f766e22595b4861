#include "glaslab/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace glaslab {

namespace {

// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration on P_M.
void gauss_legendre(int m, std::vector<double>& x, std::vector<double>& w) {
  x.assign(static_cast<size_t>(m), 0.0);
  w.assign(static_cast<size_t>(m), 0.0);
  int half = (m + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (m + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < m; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      pp = m * (z * p0 - p1) / (z * z - 1.0);
      double z1 = z;
      z = z1 - p0 / pp;
      if (std::abs(z - z1) < 1e-15) break;
    }
    x[static_cast<size_t>(i)] = -z;
    x[static_cast<size_t>(m - 1 - i)] = z;
    w[static_cast<size_t>(i)] = 2.0 / ((1.0 - z * z) * pp * pp);
    w[static_cast<size_t>(m - 1 - i)] = w[static_cast<size_t>(i)];
  }
}

double tail_exponent(double u, double r, double b, double L) {
  // log of the tail envelope exp(-uL^4 + rL^2 + |b|L) * (1+L)^16
  return -u * L * L * L * L + r * L * L + std::abs(b) * L + 16.0 * std::log1p(L);
}

}  // namespace

double quadrature_cutoff(double u, double r, double bmax) {
  if (!(u > 0)) throw std::invalid_argument("quadrature_cutoff: u must be > 0");
  double L = 2.0;
  // central mass is at least O(1); demand the envelope below 1e-14
  while (tail_exponent(u, r, bmax, L) > std::log(1e-14)) {
    L += 0.25;
    if (L > 200.0) throw std::runtime_error("quadrature_cutoff: certificate unsatisfiable");
  }
  return L;
}

QuadratureGrid make_quadrature_grid(double u, double r, double bmax, int node_count) {
  QuadratureGrid g;
  g.node_count = node_count;
  g.cutoff = quadrature_cutoff(u, r, bmax);
  std::vector<double> x, w;
  gauss_legendre(node_count, x, w);
  g.nodes.resize(static_cast<size_t>(node_count));
  g.weights.resize(static_cast<size_t>(node_count));
  for (int i = 0; i < node_count; ++i) {
    g.nodes[static_cast<size_t>(i)] = g.cutoff * x[static_cast<size_t>(i)];
    g.weights[static_cast<size_t>(i)] = g.cutoff * w[static_cast<size_t>(i)];
  }
  return g;
}

namespace {

// raw integral of phi^k against exp(-u phi^4 + r phi^2 + b phi)
double raw_single_site(double u, double r, double b, int k, int m) {
  QuadratureGrid g = make_quadrature_grid(u, r, std::abs(b), m);
  double s = 0.0;
  for (int i = 0; i < m; ++i) {
    double phi = g.nodes[static_cast<size_t>(i)];
    double phi2 = phi * phi;
    double val = g.weights[static_cast<size_t>(i)] *
                 std::exp(-u * phi2 * phi2 + r * phi2 + b * phi);
    s += val * std::pow(phi, k);
  }
  return s;
}

}  // namespace

double single_site_log_z(double u, double r, double b, int node_count) {
  double z1 = raw_single_site(u, r, b, 0, node_count);
  double z2 = raw_single_site(u, r, b, 0, 2 * node_count);
  if (std::abs(z1 - z2) > 1e-9 * std::abs(z2))
    throw std::runtime_error("single_site_log_z: doubling certificate failed");
  return std::log(z2);
}

double single_site_moment(double u, double r, double b, int k, int node_count) {
  if (k < 0 || k > 16) throw std::invalid_argument("single_site_moment: k must be in [0,16]");
  double m1 = raw_single_site(u, r, b, k, node_count) / raw_single_site(u, r, b, 0, node_count);
  double m2 = raw_single_site(u, r, b, k, 2 * node_count) /
              raw_single_site(u, r, b, 0, 2 * node_count);
  double scale = std::max(std::abs(m2), 1e-6);
  if (std::abs(m1 - m2) > 1e-9 * scale)
    throw std::runtime_error("single_site_moment: doubling certificate failed");
  return m2;
}

ExactOracle::ExactOracle(const LatticeSpec& lattice, const DisorderRealization& disorder,
                         const ModelParams& params, const PerturbationSpec& pert,
                         int node_count)
    : lattice_(lattice),
      disorder_(disorder),
      params_(params),
      pert_(pert),
      node_count_(node_count) {
  if (lattice.site_count > kOracleSiteCap)
    throw std::invalid_argument("ExactOracle: lattice above the 4-site exact cap");
  params_.validate();
  pert_.validate();
  double bmax = 0.0;
  for (double gx : disorder_.g) bmax = std::max(bmax, std::abs(gx));
  bmax = params_.h * bmax + params_.beta * 4.0;  // neighbor field headroom
  double cost = std::pow(static_cast<double>(node_count_),
                         static_cast<double>(lattice.site_count));
  if (cost > 3.5e7) throw std::runtime_error("ExactOracle: node budget exceeded");
  grid_ = make_quadrature_grid(params_.u, params_.r, bmax, node_count_);
}

void ExactOracle::run_pass(const std::vector<std::map<int, int>>& monomials) {
  const int s = static_cast<int>(lattice_.site_count);
  const int m = grid_.node_count;
  const bool complex_mode = (pert_.mode == PertMode::imaginary_exact);
  const double cn = pert_.c_n(lattice_.site_count);

  // per-site 1D weights including the Dphi measure and the random field
  std::vector<std::vector<double>> w(static_cast<size_t>(s),
                                     std::vector<double>(static_cast<size_t>(m)));
  for (int x = 0; x < s; ++x)
    for (int i = 0; i < m; ++i) {
      double phi = grid_.nodes[static_cast<size_t>(i)];
      double phi2 = phi * phi;
      w[static_cast<size_t>(x)][static_cast<size_t>(i)] =
          grid_.weights[static_cast<size_t>(i)] *
          std::exp(-params_.u * phi2 * phi2 + params_.r * phi2 +
                   params_.h * disorder_.g[static_cast<size_t>(x)] * phi);
    }

  // shared edge factor matrix exp(beta phi_i phi_j)
  std::vector<double> edge_fac(static_cast<size_t>(m) * m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      edge_fac[static_cast<size_t>(i) * m + j] =
          std::exp(params_.beta * grid_.nodes[static_cast<size_t>(i)] *
                   grid_.nodes[static_cast<size_t>(j)]);

  // power tables nodes^k, k = 0..8 (shared across sites)
  constexpr int kMaxPow = 8;
  std::vector<std::array<double, kMaxPow + 1>> pow_tab(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    pow_tab[static_cast<size_t>(i)][0] = 1.0;
    for (int k = 1; k <= kMaxPow; ++k)
      pow_tab[static_cast<size_t>(i)][k] =
          pow_tab[static_cast<size_t>(i)][k - 1] * grid_.nodes[static_cast<size_t>(i)];
  }

  // monomials as dense power vectors
  std::vector<std::vector<int>> mono(monomials.size(), std::vector<int>(static_cast<size_t>(s), 0));
  for (size_t q = 0; q < monomials.size(); ++q)
    for (const auto& [site, k] : monomials[q]) {
      if (site < 0 || site >= s) throw std::invalid_argument("monomial site out of range");
      if (k < 0 || k > kMaxPow) throw std::invalid_argument("monomial power beyond tensor degree");
      mono[q][static_cast<size_t>(site)] = k;
    }

  // scaled perturbation tensors for the complex phase c_n * X(phi)
  struct ScaledXi {
    int p;
    long sc;
    const XiTensor* t;
    double prefac;
  };
  std::vector<ScaledXi> pert_tensors;
  if (complex_mode) {
    for (const auto& [p, a] : pert_.alpha) {
      if (a == 0.0) continue;
      const XiTensor& t = disorder_.xi.at(p);
      pert_tensors.push_back({p, lattice_.site_count, &t,
                              cn * a * std::ldexp(1.0, -p) *
                                  std::pow(static_cast<double>(lattice_.site_count),
                                           -0.5 * (p - 1))});
    }
  }

  long total = 1;
  for (int x = 0; x < s; ++x) total *= m;

  std::complex<double> z_acc{0.0, 0.0};
  double abs_acc = 0.0;
  std::vector<std::complex<double>> mono_acc(mono.size(), {0.0, 0.0});

  std::vector<int> idx(static_cast<size_t>(s), 0);
  for (long flat = 0; flat < total; ++flat) {
    double weight = 1.0;
    for (int x = 0; x < s; ++x)
      weight *= w[static_cast<size_t>(x)][static_cast<size_t>(idx[static_cast<size_t>(x)])];
    for (const auto& [a, b] : lattice_.edges)
      weight *= edge_fac[static_cast<size_t>(idx[static_cast<size_t>(a)]) * m +
                         idx[static_cast<size_t>(b)]];

    std::complex<double> cw;
    if (complex_mode) {
      // theta = c_n * X(phi), full-tuple sum over the small lattice
      double theta = 0.0;
      for (const auto& st : pert_tensors) {
        long tcount = st.t->entry_count();
        for (long tf = 0; tf < tcount; ++tf) {
          long rem = tf;
          double prod = 1.0;
          for (int l = 0; l < st.p; ++l) {
            prod *= grid_.nodes[static_cast<size_t>(idx[static_cast<size_t>(rem % st.sc)])];
            rem /= st.sc;
          }
          theta += st.prefac * st.t->at(tf) * prod;
        }
      }
      // exp(-H) picks up exp(+H^per) = exp(i c_n X)
      cw = weight * std::complex<double>(std::cos(theta), std::sin(theta));
    } else {
      cw = weight;
    }

    z_acc += cw;
    abs_acc += std::abs(weight);
    for (size_t q = 0; q < mono.size(); ++q) {
      double v = 1.0;
      for (int x = 0; x < s; ++x) {
        int k = mono[q][static_cast<size_t>(x)];
        if (k) v *= pow_tab[static_cast<size_t>(idx[static_cast<size_t>(x)])][k];
      }
      mono_acc[q] += cw * v;
    }

    // odometer
    for (int x = 0; x < s; ++x) {
      if (++idx[static_cast<size_t>(x)] < m) break;
      idx[static_cast<size_t>(x)] = 0;
    }
  }

  z_ = z_acc;
  abs_weight_sum_ = abs_acc;
  have_z_ = true;
  if (std::abs(z_) < 1e-12 * abs_weight_sum_)
    throw std::runtime_error("ExactOracle: partition function cancels within quadrature error");
  for (size_t q = 0; q < mono.size(); ++q)
    moment_cache_[mono[q]] = mono_acc[q] / z_;
}

void ExactOracle::ensure_z() {
  if (!have_z_) run_pass({});
}

ComplexExpectation ExactOracle::partition_function() {
  ensure_z();
  // coarse-grid comparison as a conservative quadrature error proxy
  ExactOracle coarse(lattice_, disorder_, params_, pert_, node_count_ / 2);
  coarse.ensure_z();
  ComplexExpectation e;
  e.value = z_;
  e.quad_error = std::abs(z_ - coarse.z_);
  return e;
}

std::pair<double, double> ExactOracle::free_energy() {
  ensure_z();
  double vn = static_cast<double>(lattice_.site_count);
  return {std::log(std::abs(z_)) / vn, std::arg(z_) / vn};
}

std::complex<double> ExactOracle::expect_monomial(const std::map<int, int>& powers) {
  std::vector<int> key(static_cast<size_t>(lattice_.site_count), 0);
  for (const auto& [site, k] : powers) key[static_cast<size_t>(site)] = k;
  auto it = moment_cache_.find(key);
  if (it != moment_cache_.end()) return it->second;
  run_pass({powers});
  return moment_cache_.at(key);
}

ComplexExpectation ExactOracle::expect_polynomial(const SitePolynomial& obs) {
  // batch the uncached monomials into a single grid pass
  std::vector<std::map<int, int>> need;
  for (const auto& mono : obs) {
    std::vector<int> key(static_cast<size_t>(lattice_.site_count), 0);
    for (const auto& [site, k] : mono.powers) key[static_cast<size_t>(site)] = k;
    if (!moment_cache_.count(key)) need.push_back(mono.powers);
  }
  if (!need.empty()) run_pass(need);
  ComplexExpectation e;
  for (const auto& mono : obs) e.value += mono.coeff * expect_monomial(mono.powers);
  e.quad_error = std::abs(e.value) * 1e-9;
  return e;
}

CorrelationTensors ExactOracle::correlation_tensors() {
  if (pert_.mode == PertMode::imaginary_exact)
    throw std::invalid_argument("correlation_tensors: real modes only");
  const int s = static_cast<int>(lattice_.site_count);
  std::vector<std::map<int, int>> need;
  for (int x = 0; x < s; ++x) {
    need.push_back({{x, 1}});
    for (int k = 2; k <= 8; ++k) need.push_back({{x, k}});
    for (int y = x + 1; y < s; ++y) need.push_back({{x, 1}, {y, 1}});
  }
  std::vector<std::map<int, int>> uncached;
  for (auto& p : need) {
    std::vector<int> key(static_cast<size_t>(s), 0);
    for (const auto& [site, k] : p) key[static_cast<size_t>(site)] = k;
    if (!moment_cache_.count(key)) uncached.push_back(p);
  }
  if (!uncached.empty()) run_pass(uncached);

  CorrelationTensors t;
  t.one_point.resize(static_cast<size_t>(s));
  t.two_point.assign(static_cast<size_t>(s), std::vector<double>(static_cast<size_t>(s)));
  t.site_moments.resize(static_cast<size_t>(s));
  for (int x = 0; x < s; ++x) {
    t.one_point[static_cast<size_t>(x)] = expect_monomial({{x, 1}}).real();
    t.site_moments[static_cast<size_t>(x)][0] = 1.0;
    t.site_moments[static_cast<size_t>(x)][1] = t.one_point[static_cast<size_t>(x)];
    for (int k = 2; k <= 8; ++k)
      t.site_moments[static_cast<size_t>(x)][static_cast<size_t>(k)] =
          expect_monomial({{x, k}}).real();
    t.two_point[static_cast<size_t>(x)][static_cast<size_t>(x)] =
        t.site_moments[static_cast<size_t>(x)][2];
    for (int y = x + 1; y < s; ++y) {
      double v = expect_monomial({{x, 1}, {y, 1}}).real();
      t.two_point[static_cast<size_t>(x)][static_cast<size_t>(y)] = v;
      t.two_point[static_cast<size_t>(y)][static_cast<size_t>(x)] = v;
    }
  }
  return t;
}

ComplexExpectation ExactOracle::replica_observable(const OverlapPoly& spec) {
  const int s = static_cast<int>(lattice_.site_count);
  const double vn = static_cast<double>(s);

  // gather every single-replica monomial the assembly will touch
  auto per_replica_powers = [&](const OverlapTerm& term,
                                const std::vector<int>& sites) {
    std::map<int, std::map<int, int>> by_replica;
    for (size_t k = 0; k < term.factors.size(); ++k) {
      auto [a, b] = term.factors[k];
      by_replica[a][sites[k]] += 1;
      by_replica[b][sites[k]] += 1;
    }
    return by_replica;
  };

  std::vector<std::map<int, int>> need;
  for (const auto& term : spec) {
    if (term.factors.size() > 2)
      throw std::invalid_argument(
          "replica_observable: terms beyond degree 2 exceed the stored tensor degree");
    size_t kf = term.factors.size();
    std::vector<int> sites(kf, 0);
    long tuples = 1;
    for (size_t k = 0; k < kf; ++k) tuples *= s;
    for (long flat = 0; flat < tuples; ++flat) {
      long rem = flat;
      for (size_t k = 0; k < kf; ++k) {
        sites[k] = static_cast<int>(rem % s);
        rem /= s;
      }
      for (const auto& [rep, powers] : per_replica_powers(term, sites)) {
        std::vector<int> key(static_cast<size_t>(s), 0);
        for (const auto& [site, p] : powers) key[static_cast<size_t>(site)] = p;
        if (!moment_cache_.count(key)) {
          need.push_back(powers);
          moment_cache_[key] = {0.0, 0.0};  // placeholder so we batch uniquely
        }
      }
    }
  }
  // clear placeholders, then run one pass for the whole batch
  for (const auto& p : need) {
    std::vector<int> key(static_cast<size_t>(s), 0);
    for (const auto& [site, k] : p) key[static_cast<size_t>(site)] = k;
    moment_cache_.erase(key);
  }
  if (!need.empty()) run_pass(need);

  ComplexExpectation out;
  for (const auto& term : spec) {
    size_t kf = term.factors.size();
    if (kf == 0) {
      out.value += term.coeff;
      continue;
    }
    std::vector<int> sites(kf, 0);
    long tuples = 1;
    for (size_t k = 0; k < kf; ++k) tuples *= s;
    std::complex<double> acc{0.0, 0.0};
    for (long flat = 0; flat < tuples; ++flat) {
      long rem = flat;
      for (size_t k = 0; k < kf; ++k) {
        sites[k] = static_cast<int>(rem % s);
        rem /= s;
      }
      std::complex<double> prod{1.0, 0.0};
      for (const auto& [rep, powers] : per_replica_powers(term, sites))
        prod *= expect_monomial(powers);
      acc += prod;
    }
    out.value += term.coeff * acc / std::pow(vn, static_cast<double>(kf));
  }
  out.quad_error = std::abs(out.value) * 1e-9;
  return out;
}

void ExactOracle::prefetch(const std::vector<std::map<int, int>>& monomials) {
  std::vector<std::map<int, int>> need;
  for (const auto& p : monomials) {
    std::vector<int> key(static_cast<size_t>(lattice_.site_count), 0);
    for (const auto& [site, k] : p) key[static_cast<size_t>(site)] = k;
    if (!moment_cache_.count(key)) need.push_back(p);
  }
  if (!need.empty()) run_pass(need);
}

namespace {
std::vector<std::map<int, int>> low_order_monomials(int s) {
  std::vector<std::map<int, int>> v;
  for (int x = 0; x < s; ++x) {
    v.push_back({{x, 1}});
    v.push_back({{x, 2}});
  }
  return v;
}
}  // namespace

double ExactOracle::thermal_r11() {
  prefetch(low_order_monomials(static_cast<int>(lattice_.site_count)));
  double s = 0.0;
  for (int x = 0; x < lattice_.site_count; ++x)
    s += expect_monomial({{x, 2}}).real();
  return s / static_cast<double>(lattice_.site_count);
}

double ExactOracle::thermal_r12() {
  prefetch(low_order_monomials(static_cast<int>(lattice_.site_count)));
  double s = 0.0;
  for (int x = 0; x < lattice_.site_count; ++x) {
    double m1 = expect_monomial({{x, 1}}).real();
    s += m1 * m1;
  }
  return s / static_cast<double>(lattice_.site_count);
}

double ExactOracle::thermal_delta_n() {
  prefetch(low_order_monomials(static_cast<int>(lattice_.site_count)));
  double s = 0.0;
  for (int x = 0; x < lattice_.site_count; ++x)
    s += disorder_.g[static_cast<size_t>(x)] * expect_monomial({{x, 1}}).real();
  return s / static_cast<double>(lattice_.site_count);
}

}  // namespace glaslab
