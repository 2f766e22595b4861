#include "glaslab/stats.hpp"

#include <cmath>
#include <stdexcept>

namespace glaslab {

double mean(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean: empty input");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double variance(const std::vector<double>& v) {
  double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

Estimate mean_with_error(const std::vector<double>& v) {
  Estimate e;
  e.value = mean(v);
  if (v.size() > 1)
    e.err = std::sqrt(variance(v) / static_cast<double>(v.size() - 1));
  return e;
}

Estimate blocked_mean(const std::vector<double>& series, int n_blocks) {
  if (series.empty()) throw std::invalid_argument("blocked_mean: empty series");
  if (n_blocks < 2 || static_cast<size_t>(n_blocks) > series.size())
    n_blocks = static_cast<int>(std::min<size_t>(series.size(), 2));
  size_t block_len = series.size() / static_cast<size_t>(n_blocks);
  std::vector<double> blocks;
  blocks.reserve(static_cast<size_t>(n_blocks));
  for (int b = 0; b < n_blocks; ++b) {
    double s = 0.0;
    for (size_t i = 0; i < block_len; ++i)
      s += series[static_cast<size_t>(b) * block_len + i];
    blocks.push_back(s / static_cast<double>(block_len));
  }
  Estimate e;
  e.value = mean(series);
  e.err = std::sqrt(variance(blocks) / static_cast<double>(n_blocks - 1));
  return e;
}

Estimate jackknife(const std::vector<std::vector<double>>& rows,
                   const std::function<double(const std::vector<std::vector<double>>&)>& stat) {
  size_t n = rows.size();
  if (n < 2) throw std::invalid_argument("jackknife: need at least 2 disorder rows");
  double full = stat(rows);
  std::vector<double> loo(n);
  std::vector<std::vector<double>> sub;
  sub.reserve(n - 1);
  for (size_t i = 0; i < n; ++i) {
    sub.clear();
    for (size_t j = 0; j < n; ++j)
      if (j != i) sub.push_back(rows[j]);
    loo[i] = stat(sub);
  }
  double m = mean(loo);
  double ss = 0.0;
  for (double x : loo) ss += (x - m) * (x - m);
  Estimate e;
  e.value = full;
  e.err = std::sqrt((static_cast<double>(n - 1) / static_cast<double>(n)) * ss);
  return e;
}

FitResult weighted_linear_fit(const std::vector<double>& x, const std::vector<double>& y,
                              const std::vector<double>& sigma) {
  if (x.size() != y.size() || x.size() != sigma.size() || x.size() < 2)
    throw std::invalid_argument("weighted_linear_fit: need >= 2 matched points");
  double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    double s = sigma[i] > 0 ? sigma[i] : 1e-12;
    double w = 1.0 / (s * s);
    sw += w;
    swx += w * x[i];
    swy += w * y[i];
    swxx += w * x[i] * x[i];
    swxy += w * x[i] * y[i];
  }
  double det = sw * swxx - swx * swx;
  if (det <= 0) throw std::runtime_error("weighted_linear_fit: degenerate abscissae");
  FitResult f;
  f.slope = (sw * swxy - swx * swy) / det;
  f.intercept = (swxx * swy - swx * swxy) / det;
  f.slope_err = std::sqrt(sw / det);
  return f;
}

}  // namespace glaslab
