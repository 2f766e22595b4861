#include "glaslab/observables.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace glaslab {

double overlap(const SpinConfig& a, const SpinConfig& b) {
  if (a.phi.size() != b.phi.size())
    throw std::invalid_argument("overlap: configs on different lattices");
  double s = 0.0;
  for (size_t x = 0; x < a.phi.size(); ++x) s += a.phi[x] * b.phi[x];
  return s / static_cast<double>(a.phi.size());
}

double delta_n(const SpinConfig& config, const std::vector<double>& g) {
  if (config.phi.size() != g.size())
    throw std::invalid_argument("delta_n: config and field on different lattices");
  double s = 0.0;
  for (size_t x = 0; x < g.size(); ++x) s += g[x] * config.phi[x];
  return s / static_cast<double>(g.size());
}

int OverlapExpr::max_replica() const {
  int m = 0;
  for (const auto& term : poly)
    for (const auto& [a, b] : term.factors) m = std::max({m, a, b});
  return m;
}

double OverlapExpr::eval_snapshot(const std::vector<const SpinConfig*>& replicas) const {
  double v = 0.0;
  for (const auto& term : poly) {
    double t = term.coeff;
    for (const auto& [a, b] : term.factors) {
      if (a < 1 || b < 1 || a > static_cast<int>(replicas.size()) ||
          b > static_cast<int>(replicas.size()))
        throw std::invalid_argument("OverlapExpr: replica index out of range");
      t *= overlap(*replicas[static_cast<size_t>(a - 1)],
                   *replicas[static_cast<size_t>(b - 1)]);
    }
    v += t;
  }
  if (clamp) v = std::clamp(v, -1.0, 1.0);
  return v;
}

double OverlapExpr::eval(const std::vector<double>&,
                         const std::vector<const SpinConfig*>& replicas) const {
  return eval_snapshot(replicas);
}

OverlapExpr parse_overlap_expr(const std::string& text) {
  OverlapExpr e;
  e.tag = text;
  std::string s;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) s += c;
  if (s.rfind("clamp(", 0) == 0 && s.back() == ')') {
    e.clamp = true;
    s = s.substr(6, s.size() - 7);
  }
  if (s.empty()) throw std::invalid_argument("parse_overlap_expr: empty expression");
  size_t pos = 0;
  while (pos < s.size()) {
    size_t next = s.find('+', pos + 1);
    std::string term_str = s.substr(pos, next == std::string::npos ? next : next - pos);
    pos = next == std::string::npos ? s.size() : next + 1;
    OverlapTerm term;
    size_t fpos = 0;
    while (fpos < term_str.size()) {
      size_t star = term_str.find('*', fpos);
      std::string fac = term_str.substr(fpos, star == std::string::npos ? star : star - fpos);
      fpos = star == std::string::npos ? term_str.size() : star + 1;
      if (fac.size() >= 3 && (fac[0] == 'R' || fac[0] == 'r')) {
        int a = fac[1] - '0';
        int b = fac[2] - '0';
        if (a < 1 || b < 1 || fac.size() != 3)
          throw std::invalid_argument("parse_overlap_expr: bad overlap symbol " + fac);
        term.factors.emplace_back(a, b);
      } else {
        term.coeff *= std::stod(fac);
      }
    }
    e.poly.push_back(term);
  }
  return e;
}

DisorderSummary summarize_streams(const LatticeSpec&, const std::vector<double>& g,
                                  const std::vector<std::vector<SpinConfig>>& streams,
                                  const OverlapExpr* f_spec, int gg_m) {
  const int m = static_cast<int>(streams.size());
  if (m < 1) throw std::invalid_argument("summarize_streams: no replicas");
  const size_t t_count = streams[0].size();
  for (const auto& st : streams)
    if (st.size() != t_count)
      throw std::invalid_argument("summarize_streams: uneven stream lengths");
  if (t_count == 0) throw std::invalid_argument("summarize_streams: empty streams");

  DisorderSummary out;
  double n_self = 0, n_pair = 0;
  for (size_t t = 0; t < t_count; ++t) {
    for (int i = 0; i < m; ++i) {
      const SpinConfig& ci = streams[static_cast<size_t>(i)][t];
      out.r11 += overlap(ci, ci);
      double d = delta_n(ci, g);
      out.delta += d;
      out.delta_sq += d * d;
      ++n_self;
      for (int j = i + 1; j < m; ++j) {
        double r = overlap(ci, streams[static_cast<size_t>(j)][t]);
        out.r12 += r;
        out.r12_sq += r * r;
        ++n_pair;
      }
    }
  }
  out.r11 /= n_self;
  out.delta /= n_self;
  out.delta_sq /= n_self;
  if (n_pair > 0) {
    out.r12 /= n_pair;
    out.r12_sq /= n_pair;
  }

  if (f_spec != nullptr && gg_m >= 2) {
    if (m < gg_m + 1)
      throw std::invalid_argument("summarize_streams: GG block needs m+1 replicas");
    if (f_spec->max_replica() > gg_m)
      throw std::invalid_argument("summarize_streams: f-spec references replica beyond m");
    out.has_gg = true;
    out.gg_m = gg_m;
    out.gg_f_r1s.assign(static_cast<size_t>(gg_m - 1), 0.0);

    // symmetrize over all label permutations of the m+1 replicas so the
    // estimator is exactly invariant under shuffling the input streams
    std::vector<int> perm(static_cast<size_t>(gg_m + 1));
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<std::vector<int>> perms;
    do {
      perms.push_back(perm);
    } while (std::next_permutation(perm.begin(), perm.end()));

    double norm = 0.0;
    for (size_t t = 0; t < t_count; ++t) {
      std::vector<const SpinConfig*> rep(static_cast<size_t>(gg_m + 1));
      for (const auto& p : perms) {
        for (int k = 0; k <= gg_m; ++k)
          rep[static_cast<size_t>(k)] = &streams[static_cast<size_t>(p[static_cast<size_t>(k)])][t];
        double f = f_spec->eval_snapshot(rep);
        out.gg_f += f;
        for (int s = 2; s <= gg_m; ++s)
          out.gg_f_r1s[static_cast<size_t>(s - 2)] +=
              f * overlap(*rep[0], *rep[static_cast<size_t>(s - 1)]);
        out.gg_f_r1m1 += f * overlap(*rep[0], *rep[static_cast<size_t>(gg_m)]);
        norm += 1.0;
      }
    }
    out.gg_f /= norm;
    for (auto& v : out.gg_f_r1s) v /= norm;
    out.gg_f_r1m1 /= norm;
  }
  return out;
}

DisorderSummary summarize_oracle(ExactOracle& oracle, const std::vector<double>& g) {
  CorrelationTensors t = oracle.correlation_tensors();
  const size_t s = t.one_point.size();
  const double vn = static_cast<double>(s);
  DisorderSummary out;
  for (size_t x = 0; x < s; ++x) {
    out.r11 += t.two_point[x][x];
    out.r12 += t.one_point[x] * t.one_point[x];
    out.delta += g[x] * t.one_point[x];
    for (size_t y = 0; y < s; ++y) {
      out.r12_sq += t.two_point[x][y] * t.two_point[x][y];
      out.delta_sq += g[x] * g[y] * t.two_point[x][y];
    }
  }
  out.r11 /= vn;
  out.r12 /= vn;
  out.delta /= vn;
  out.r12_sq /= vn * vn;
  out.delta_sq /= vn * vn;
  return out;
}

namespace {

std::vector<std::vector<double>> to_rows(const std::vector<DisorderSummary>& rows) {
  std::vector<std::vector<double>> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    std::vector<double> v{r.r11, r.r12, r.r12_sq, r.delta, r.delta_sq};
    if (r.has_gg) {
      v.push_back(r.gg_f);
      v.push_back(r.gg_f_r1m1);
      for (double x : r.gg_f_r1s) v.push_back(x);
    }
    out.push_back(std::move(v));
  }
  return out;
}

double col_mean(const std::vector<std::vector<double>>& rows, size_t col) {
  double s = 0.0;
  for (const auto& r : rows) s += r[col];
  return s / static_cast<double>(rows.size());
}

void require_ensemble(const std::vector<DisorderSummary>& rows) {
  if (rows.size() < 8)
    throw std::invalid_argument("ensemble estimator: need >= 8 disorder realizations");
}

}  // namespace

Estimate overlap_variance(const std::vector<DisorderSummary>& rows) {
  require_ensemble(rows);
  return jackknife(to_rows(rows), [](const std::vector<std::vector<double>>& r) {
    double m1 = col_mean(r, 1);
    return col_mean(r, 2) - m1 * m1;
  });
}

SelfAveragingGaps self_averaging_gaps(const std::vector<DisorderSummary>& rows) {
  require_ensemble(rows);
  auto data = to_rows(rows);
  SelfAveragingGaps out;
  out.thermal_gap = jackknife(data, [](const std::vector<std::vector<double>>& r) {
    double s = 0.0;
    for (const auto& row : r) s += row[2] - row[1] * row[1];
    return s / static_cast<double>(r.size());
  });
  out.disorder_gap = jackknife(data, [](const std::vector<std::vector<double>>& r) {
    double s = 0.0;
    for (const auto& row : r) s += row[1] * row[1];
    double m = col_mean(r, 1);
    return s / static_cast<double>(r.size()) - m * m;
  });
  out.total_variance = jackknife(data, [](const std::vector<std::vector<double>>& r) {
    double m1 = col_mean(r, 1);
    return col_mean(r, 2) - m1 * m1;
  });
  out.closure_residual = std::abs(out.total_variance.value - out.thermal_gap.value -
                                  out.disorder_gap.value);
  out.delta_thermal_gap = jackknife(data, [](const std::vector<std::vector<double>>& r) {
    double s = 0.0;
    for (const auto& row : r) s += row[4] - row[3] * row[3];
    return s / static_cast<double>(r.size());
  });
  out.delta_abs_gap = jackknife(data, [](const std::vector<std::vector<double>>& r) {
    double m = col_mean(r, 3);
    double s = 0.0;
    for (const auto& row : r) s += std::abs(row[3] - m);
    return s / static_cast<double>(r.size());
  });
  out.r11_abs_gap = jackknife(data, [](const std::vector<std::vector<double>>& r) {
    double m = col_mean(r, 0);
    double s = 0.0;
    for (const auto& row : r) s += std::abs(row[0] - m);
    return s / static_cast<double>(r.size());
  });
  return out;
}

Estimate gg_residual(const std::vector<DisorderSummary>& rows) {
  require_ensemble(rows);
  for (const auto& r : rows)
    if (!r.has_gg) throw std::invalid_argument("gg_residual: rows carry no GG block");
  const int m = rows[0].gg_m;
  auto data = to_rows(rows);
  // columns: 5 = <f>, 6 = <f R_{1,m+1}>, 7.. = <f R_{1,s}> s=2..m
  return jackknife(data, [m](const std::vector<std::vector<double>>& r) {
    double res = col_mean(r, 6) - col_mean(r, 5) * col_mean(r, 1) / m;
    for (int s = 2; s <= m; ++s)
      res -= col_mean(r, static_cast<size_t>(7 + s - 2)) / m;
    return res;
  });
}

Estimate ibp_check(const std::vector<DisorderSummary>& rows, double h) {
  require_ensemble(rows);
  return jackknife(to_rows(rows), [h](const std::vector<std::vector<double>>& r) {
    return col_mean(r, 3) - h * (col_mean(r, 0) - col_mean(r, 1));
  });
}

double free_energy_zero_beta(const LatticeSpec& lattice, const std::vector<double>& g,
                             const ModelParams& params) {
  double s = 0.0;
  for (long x = 0; x < lattice.site_count; ++x)
    s += single_site_log_z(params.u, params.r, params.h * g[static_cast<size_t>(x)]);
  return s / static_cast<double>(lattice.site_count);
}

ThermoIntegrationResult free_energy_thermo(const LatticeSpec& lattice,
                                           const DisorderRealization& disorder,
                                           const ModelParams& params,
                                           const std::vector<double>& beta_grid,
                                           const RNGSpec& rng, long realization_index,
                                           int burn_in, int samples, int thinning) {
  if (beta_grid.size() < 2 || beta_grid.front() != 0.0)
    throw std::invalid_argument("free_energy_thermo: grid must run from 0 to target beta");
  for (size_t k = 1; k < beta_grid.size(); ++k)
    if (beta_grid[k] <= beta_grid[k - 1])
      throw std::invalid_argument("free_energy_thermo: grid must be increasing");

  const double vn = static_cast<double>(lattice.site_count);
  ThermoIntegrationResult out;

  // beta = 0 integrand is exact: the measure factorizes over sites
  {
    double s = 0.0;
    for (const auto& [a, b] : lattice.edges)
      s += single_site_moment(params.u, params.r, params.h * disorder.g[static_cast<size_t>(a)], 1) *
           single_site_moment(params.u, params.r, params.h * disorder.g[static_cast<size_t>(b)], 1);
    out.integrand.push_back(s / vn);
    out.integrand_err.push_back(0.0);
  }

  for (size_t k = 1; k < beta_grid.size(); ++k) {
    ModelParams p = params;
    p.beta = beta_grid[k];
    ChainResult chain = run_chain(lattice, disorder, p, PerturbationSpec::off_spec(), rng,
                                  realization_index, 1, burn_in, samples, thinning);
    std::vector<double> series;
    series.reserve(chain.snapshots[0].size());
    for (const auto& snap : chain.snapshots[0]) {
      double s = 0.0;
      for (const auto& [a, b] : lattice.edges) s += snap.phi[a] * snap.phi[b];
      series.push_back(s / vn);
    }
    Estimate e = blocked_mean(series);
    out.integrand.push_back(e.value);
    out.integrand_err.push_back(e.err);
  }

  for (size_t k = 0; k + 1 < out.integrand.size(); ++k) {
    double joint = std::sqrt(out.integrand_err[k] * out.integrand_err[k] +
                             out.integrand_err[k + 1] * out.integrand_err[k + 1]);
    if (joint > 0 && std::abs(out.integrand[k + 1] - out.integrand[k]) > 5.0 * joint)
      out.grid_warning = true;
  }

  double integral = 0.0;
  for (size_t k = 0; k + 1 < beta_grid.size(); ++k)
    integral += 0.5 * (out.integrand[k] + out.integrand[k + 1]) *
                (beta_grid[k + 1] - beta_grid[k]);
  out.psi = free_energy_zero_beta(lattice, disorder.g, params) + integral;
  return out;
}

ConvexityResult convexity_check(const std::vector<Estimate>& p_of_h) {
  if (p_of_h.size() < 3)
    throw std::invalid_argument("convexity_check: need >= 3 grid points");
  ConvexityResult out;
  bool first = true;
  for (size_t i = 1; i + 1 < p_of_h.size(); ++i) {
    double d2 = p_of_h[i - 1].value - 2.0 * p_of_h[i].value + p_of_h[i + 1].value;
    double err = std::sqrt(p_of_h[i - 1].err * p_of_h[i - 1].err +
                           4.0 * p_of_h[i].err * p_of_h[i].err +
                           p_of_h[i + 1].err * p_of_h[i + 1].err);
    if (first || d2 < out.worst_second_difference) {
      out.worst_second_difference = d2;
      out.error = err;
      first = false;
    }
  }
  return out;
}

TruncatedCorrSum truncated_correlation_sum(
    const std::vector<CorrelationTensors>& per_disorder) {
  if (per_disorder.empty())
    throw std::invalid_argument("truncated_correlation_sum: empty ensemble");
  const size_t s = per_disorder[0].one_point.size();
  TruncatedCorrSum out;
  for (size_t x = 0; x < s; ++x)
    for (size_t y = 0; y < s; ++y) {
      double acc = 0.0;
      for (const auto& t : per_disorder)
        acc += t.two_point[x][y] - t.one_point[x] * t.one_point[y];
      acc /= static_cast<double>(per_disorder.size());
      out.sum += acc * acc;
    }
  out.per_site_ratio = out.sum / static_cast<double>(s);
  return out;
}

std::vector<double> site_moments_from_streams(
    const std::vector<std::vector<SpinConfig>>& streams, int k) {
  if (streams.empty() || streams[0].empty())
    throw std::invalid_argument("site_moments_from_streams: empty streams");
  const size_t sites = streams[0][0].phi.size();
  std::vector<double> out(sites, 0.0);
  double count = 0.0;
  for (const auto& stream : streams)
    for (const auto& snap : stream) {
      for (size_t x = 0; x < sites; ++x) out[x] += std::pow(snap.phi[x], k);
      count += 1.0;
    }
  for (auto& v : out) v /= count;
  return out;
}

Estimate moment_bound(const std::vector<std::vector<double>>& rows) {
  if (rows.size() < 2) {
    Estimate e;
    e.value = *std::max_element(rows.at(0).begin(), rows.at(0).end());
    return e;
  }
  return jackknife(rows, [](const std::vector<std::vector<double>>& r) {
    const size_t sites = r[0].size();
    double best = -1e300;
    for (size_t x = 0; x < sites; ++x) {
      double s = 0.0;
      for (const auto& row : r) s += row[x];
      best = std::max(best, s / static_cast<double>(r.size()));
    }
    return best;
  });
}

}  // namespace glaslab
