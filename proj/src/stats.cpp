#include "hypobridge/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "hypobridge/rng.hpp"

namespace hypobridge {

MeanEstimate mean_se(const std::vector<double>& xs) {
  MeanEstimate e;
  e.n = xs.size();
  if (xs.empty()) return e;
  double sum = std::accumulate(xs.begin(), xs.end(), 0.0);
  e.mean = sum / static_cast<double>(xs.size());
  if (xs.size() < 2) return e;
  double ss = 0.0;
  for (double x : xs) ss += (x - e.mean) * (x - e.mean);
  double var = ss / static_cast<double>(xs.size() - 1);
  e.se = std::sqrt(var / static_cast<double>(xs.size()));
  return e;
}

double effective_sample_size(const std::vector<double>& w) {
  double s1 = 0.0, s2 = 0.0;
  for (double x : w) {
    s1 += x;
    s2 += x * x;
  }
  if (s2 <= 0.0) return 0.0;
  return s1 * s1 / s2;
}

LineFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw std::invalid_argument("fit_line: need at least two matched points");
  std::size_t n = xs.size();
  double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_line: degenerate abscissae");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (n > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double r = ys[i] - (f.intercept + f.slope * xs[i]);
      rss += r * r;
    }
    f.slope_se = std::sqrt(rss / static_cast<double>(n - 2) / sxx);
  }
  return f;
}

namespace {

// Within-group pair sums from the pooled distance matrix for the label
// assignment in `in_a`.
void group_pair_sums(const Eigen::MatrixXf& d, const std::vector<std::uint32_t>& a_idx,
                     const std::vector<std::uint32_t>& b_idx, double* s_aa, double* s_bb) {
  double saa = 0.0;
  for (std::size_t i = 0; i < a_idx.size(); ++i)
    for (std::size_t j = i + 1; j < a_idx.size(); ++j) saa += d(a_idx[i], a_idx[j]);
  double sbb = 0.0;
  for (std::size_t i = 0; i < b_idx.size(); ++i)
    for (std::size_t j = i + 1; j < b_idx.size(); ++j) sbb += d(b_idx[i], b_idx[j]);
  *s_aa = saa;
  *s_bb = sbb;
}

double energy_statistic(double s_aa, double s_bb, double s_total, double n, double m) {
  double s_ab = s_total - s_aa - s_bb;
  return 2.0 * s_ab / (n * m) - 2.0 * s_aa / (n * n) - 2.0 * s_bb / (m * m);
}

}  // namespace

TwoSampleResult energy_distance_test(
    const Mat& a, const Mat& b,
    const std::function<double(const VecRef&, const VecRef&)>& dist,
    int n_permutations, std::uint64_t seed) {
  const std::size_t n = a.rows(), m = b.rows(), total = n + m;
  if (n < 2 || m < 2) throw std::invalid_argument("energy_distance_test: need >= 2 per sample");

  Mat pooled(total, a.cols());
  pooled.topRows(n) = a;
  pooled.bottomRows(m) = b;
  Eigen::MatrixXf d(total, total);
  double s_total = 0.0;
  for (std::size_t i = 0; i < total; ++i) {
    d(i, i) = 0.0f;
    for (std::size_t j = i + 1; j < total; ++j) {
      double v = dist(pooled.row(i), pooled.row(j));
      d(i, j) = static_cast<float>(v);
      d(j, i) = d(i, j);
      s_total += v;
    }
  }

  std::vector<std::uint32_t> a_idx(n), b_idx(m);
  std::iota(a_idx.begin(), a_idx.end(), 0);
  std::iota(b_idx.begin(), b_idx.end(), static_cast<std::uint32_t>(n));
  double s_aa, s_bb;
  group_pair_sums(d, a_idx, b_idx, &s_aa, &s_bb);
  double observed = energy_statistic(s_aa, s_bb, s_total, n, m);

  RandomStream rng(seed, 0x9e7);
  std::vector<std::uint32_t> labels(total);
  std::iota(labels.begin(), labels.end(), 0);
  int at_least = 1;  // permutation p-values include the observed statistic
  for (int p = 0; p < n_permutations; ++p) {
    for (std::size_t i = total - 1; i > 0; --i) {
      std::size_t j = rng.next_below(i + 1);
      std::swap(labels[i], labels[j]);
    }
    std::vector<std::uint32_t> pa(labels.begin(), labels.begin() + n);
    std::vector<std::uint32_t> pb(labels.begin() + n, labels.end());
    group_pair_sums(d, pa, pb, &s_aa, &s_bb);
    if (energy_statistic(s_aa, s_bb, s_total, n, m) >= observed) ++at_least;
  }

  TwoSampleResult r;
  r.statistic = observed;
  r.permutations = n_permutations;
  r.p_value = static_cast<double>(at_least) / static_cast<double>(n_permutations + 1);
  return r;
}

double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw std::invalid_argument("ks_statistic: empty sample");
  std::sort(samples.begin(), samples.end());
  double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double f = cdf(samples[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  return d;
}

double ks_p_value(double statistic, std::size_t n) {
  double lambda = (std::sqrt(static_cast<double>(n)) + 0.12 + 0.11 / std::sqrt(static_cast<double>(n))) * statistic;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    double term = 2.0 * std::pow(-1.0, k - 1) * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-12) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw std::invalid_argument("quantile: empty sample");
  std::sort(xs.begin(), xs.end());
  double pos = q * static_cast<double>(xs.size() - 1);
  std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  std::size_t hi = std::min(lo + 1, xs.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return xs[lo] * (1.0 - frac) + xs[hi] * frac;
}

}  // namespace hypobridge
