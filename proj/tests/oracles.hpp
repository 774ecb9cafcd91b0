// Test-side reference oracles, independent of the library's solver/estimator
// code paths: wrapped-Gaussian theta series for the flat torus, the classical
// integral representation of the Heisenberg sub-Laplacian kernel, folded
// Gaussian moments, and a brute-force control search on the Heisenberg group.
#pragma once

#include <cmath>
#include <limits>
#include <vector>

namespace oracles {

constexpr double kPi = 3.14159265358979323846;
constexpr int kThetaTerms = 20;

inline double gauss_pdf(double x, double var) {
  return std::exp(-0.5 * x * x / var) / std::sqrt(2.0 * kPi * var);
}

inline double gauss_cdf(double x, double var) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0 * var));
}

/// Heat kernel on the unit circle: sum_k N(0,t) density at x + k.
inline double theta1d(double t, double x) {
  double s = 0.0;
  for (int k = -kThetaTerms; k <= kThetaTerms; ++k) s += gauss_pdf(x + k, t);
  return s;
}

inline double theta1d_dx(double t, double x) {
  double s = 0.0;
  for (int k = -kThetaTerms; k <= kThetaTerms; ++k)
    s += -(x + k) / t * gauss_pdf(x + k, t);
  return s;
}

inline double theta1d_dt(double t, double x) {
  double s = 0.0;
  for (int k = -kThetaTerms; k <= kThetaTerms; ++k) {
    double u = x + k;
    s += gauss_pdf(u, t) * (u * u / (2.0 * t * t) - 1.0 / (2.0 * t));
  }
  return s;
}

/// Elliptic torus kernel q_t(x, y) as a product of coordinate theta factors.
inline double torus2_kernel(double t, double x0, double y0, double x1, double y1) {
  return theta1d(t, x1 - x0) * theta1d(t, y1 - y0);
}

/// CDF on [0,1) of (mu + N(0, var)) mod 1.
inline double wrapped_gauss_cdf(double w, double mu, double var) {
  double s = 0.0;
  for (int k = -kThetaTerms; k <= kThetaTerms; ++k)
    s += gauss_cdf(k + w - mu, var) - gauss_cdf(static_cast<double>(k) - mu, var);
  return s;
}

/// Kernel of d/dt = 1/2 (X1^2 + X2^2) on the polarized Heisenberg group
/// (X1 = dx, X2 = dy + x dz) from the origin, via the Levy-area
/// characteristic function: with a = z - xy/2,
///   q_t(x,y,z) = (1 / (2 pi^2 t^2)) *
///     int_0^inf (u/sinh u) cos(2 a u / t) exp(-(x^2+y^2) u coth(u) / (2t)) du.
inline double heisenberg_kernel(double t, double x, double y, double z) {
  double a = z - 0.5 * x * y;
  double r2 = x * x + y * y;
  double omega = 2.0 * std::abs(a) / t;
  double du = std::min(0.02, 0.15 / (1.0 + omega));
  double upper = 60.0;
  int n = static_cast<int>(upper / du);
  if (n % 2) ++n;
  du = upper / n;
  auto integrand = [&](double u) {
    if (u < 1e-12) return std::exp(-0.5 * r2 / t);
    double ratio = u < 30.0 ? u / std::sinh(u) : 2.0 * u * std::exp(-u);
    double ucoth = u < 30.0 ? u * std::cosh(u) / std::sinh(u) : u;
    return ratio * std::cos(2.0 * a * u / t) * std::exp(-0.5 * r2 * ucoth / t);
  };
  // composite Simpson
  double s = integrand(0.0) + integrand(upper);
  for (int i = 1; i < n; ++i) s += integrand(i * du) * (i % 2 ? 4.0 : 2.0);
  s *= du / 3.0;
  return s / (2.0 * kPi * kPi * t * t);
}

/// E|N(mu, sigma^2)| (folded normal mean).
inline double folded_normal_mean(double mu, double sigma) {
  if (sigma <= 0.0) return std::abs(mu);
  double z = mu / sigma;
  return sigma * std::sqrt(2.0 / kPi) * std::exp(-0.5 * z * z) +
         mu * (1.0 - 2.0 * gauss_cdf(-mu, sigma * sigma));
}

/// Expected bridge drift integral for one coordinate of the elliptic torus
/// bridge from x0c to z0c: int_0^{1-eps} E |d/du log theta_{1-s}(u - z0c)| ds
/// with the bridge marginal density theta_s(u-x0c) theta_{1-s}(u-z0c) / theta_1(x0c-z0c),
/// all by quadrature on the theta series.
inline double bridge_drift_integral_1d(double x0c, double z0c, double eps) {
  const int nu = 400;
  const int ns = 400;
  double denom = theta1d(1.0, x0c - z0c);
  double total = 0.0;
  double s_hi = 1.0 - eps;
  std::vector<double> integrand_s(ns + 1);
  for (int i = 0; i <= ns; ++i) {
    double s = s_hi * i / ns;
    if (i == 0) {
      // at s = 0 the marginal is a point mass at x0c
      integrand_s[i] = std::abs(theta1d_dx(1.0 - s, x0c - z0c) / theta1d(1.0 - s, x0c - z0c));
      continue;
    }
    double acc = 0.0;
    for (int j = 0; j < nu; ++j) {
      double u = (j + 0.5) / nu;
      double marg = theta1d(s, u - x0c) * theta1d(1.0 - s, u - z0c) / denom;
      double dlog = theta1d_dx(1.0 - s, u - z0c) / theta1d(1.0 - s, u - z0c);
      acc += marg * std::abs(dlog);
    }
    integrand_s[i] = acc / nu;
  }
  for (int i = 0; i < ns; ++i)
    total += 0.5 * (integrand_s[i] + integrand_s[i + 1]) * (s_hi / ns);
  return total;
}

/// Brute-force piecewise-constant control search on the Heisenberg group:
/// smallest duration T (from the grid) steering 0 to (0,0,z_target) within
/// the endpoint tolerances, over all words of `n_segments` controls drawn
/// from `n_dirs` unit directions. Piecewise integration is in closed form.
inline double heis_brute_force_z(double z_target, int n_segments, int n_dirs,
                                 const std::vector<double>& t_grid, double tol_xy, double tol_z) {
  struct Shape {
    double x, y, z;
  };
  std::vector<double> ca(n_dirs), sa(n_dirs);
  for (int d = 0; d < n_dirs; ++d) {
    ca[d] = std::cos(2.0 * kPi * d / n_dirs);
    sa[d] = std::sin(2.0 * kPi * d / n_dirs);
  }
  long total_words = 1;
  for (int i = 0; i < n_segments; ++i) total_words *= n_dirs;

  double best = std::numeric_limits<double>::infinity();
  for (long w = 0; w < total_words; ++w) {
    // unit-duration shape endpoint
    long code = w;
    double x = 0.0, y = 0.0, z = 0.0;
    double tau = 1.0 / n_segments;
    for (int s = 0; s < n_segments; ++s) {
      int d = static_cast<int>(code % n_dirs);
      code /= n_dirs;
      double a = ca[d], b = sa[d];
      z += b * (x * tau + 0.5 * a * tau * tau);
      x += a * tau;
      y += b * tau;
    }
    for (double T : t_grid) {
      if (T >= best) continue;
      double ex = T * x, ey = T * y, ez = T * T * z;
      if (std::abs(ex) <= tol_xy && std::abs(ey) <= tol_xy && std::abs(ez - z_target) <= tol_z)
        best = T;
    }
  }
  return best;
}

}  // namespace oracles
