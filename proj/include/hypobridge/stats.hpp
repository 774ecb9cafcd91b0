#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "hypobridge/types.hpp"

namespace hypobridge {

struct MeanEstimate {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

MeanEstimate mean_se(const std::vector<double>& xs);

/// Effective sample size of importance weights, (sum w)^2 / sum w^2.
double effective_sample_size(const std::vector<double>& w);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
};

/// Ordinary least squares y ~ a + b x with residual-based slope SE.
LineFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys);

struct TwoSampleResult {
  double statistic = 0.0;
  double p_value = 1.0;
  int permutations = 0;
};

/// Energy-distance two-sample test with permutation p-value. Rows of a and b
/// are observations; `dist` is the metric between two rows.
TwoSampleResult energy_distance_test(
    const Mat& a, const Mat& b,
    const std::function<double(const VecRef&, const VecRef&)>& dist,
    int n_permutations, std::uint64_t seed);

/// One-sample Kolmogorov-Smirnov statistic against a CDF.
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);

/// Asymptotic KS p-value (Kolmogorov distribution tail).
double ks_p_value(double statistic, std::size_t n);

double quantile(std::vector<double> xs, double q);

}  // namespace hypobridge
