#ifndef SPDE_STATS_HPP
#define SPDE_STATS_HPP

#include <cstdint>
#include <vector>

namespace spde {

/// Mergeable sufficient statistics (count, sum, sum of squares).
struct RunningStat {
  uint64_t n = 0;
  double sum = 0.0;
  double sumsq = 0.0;

  void add(double x) {
    ++n;
    sum += x;
    sumsq += x * x;
  }
  void merge(const RunningStat& o) {
    n += o.n;
    sum += o.sum;
    sumsq += o.sumsq;
  }
  double mean() const { return n ? sum / n : 0.0; }
  double variance() const;       // unbiased
  double stderr_mean() const;    // standard error of the mean
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Wilson score interval for a binomial proportion, z = 1.96 by default.
Interval wilson_interval(uint64_t successes, uint64_t trials, double z = 1.96);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  double r2 = 0.0;
  int points = 0;
};

// Weighted least squares y ~ intercept + slope * x.
LineFit weighted_least_squares(const std::vector<double>& x,
                               const std::vector<double>& y,
                               const std::vector<double>& w);

// One-sample Kolmogorov-Smirnov test against the standard normal law.
// Returns the asymptotic p-value.
double ks_test_standard_normal(std::vector<double> samples);

double median(std::vector<double> v);
double standard_normal_cdf(double x);

}  // namespace spde

#endif
