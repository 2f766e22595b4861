#ifndef GLASLAB_STATS_HPP
#define GLASLAB_STATS_HPP

#include <functional>
#include <vector>

namespace glaslab {

struct Estimate {
  double value = 0.0;
  double err = 0.0;
};

double mean(const std::vector<double>& v);
double variance(const std::vector<double>& v);  // population (1/N)

// Plain mean with standard error of the mean.
Estimate mean_with_error(const std::vector<double>& v);

// Standard error of a time series via blocking (default 20 blocks);
// accounts for autocorrelation when blocks are long.
Estimate blocked_mean(const std::vector<double>& series, int n_blocks = 20);

// Leave-one-out jackknife of an arbitrary statistic of per-disorder rows.
// rows[i] is the summary vector of disorder i; the statistic maps the
// full set of rows to a scalar.
Estimate jackknife(const std::vector<std::vector<double>>& rows,
                   const std::function<double(const std::vector<std::vector<double>>&)>& stat);

struct FitResult {
  double slope = 0.0;
  double slope_err = 0.0;
  double intercept = 0.0;
};

// Weighted least squares y = a + b x with weights 1/sigma^2.
FitResult weighted_linear_fit(const std::vector<double>& x, const std::vector<double>& y,
                              const std::vector<double>& sigma);

}  // namespace glaslab

#endif
