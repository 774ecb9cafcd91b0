#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hypobridge/bridge.hpp"
#include "hypobridge/heatkernel.hpp"
#include "hypobridge/models.hpp"

namespace hypobridge {

struct SweepEntry {
  double parameter = 0.0;
  double value = 0.0;
  double se = 0.0;
};

/// Self-contained statistical verdict: pass/fail is re-derivable from the
/// stored estimates and the declared thresholds.
struct VerificationReport {
  std::string statistic;
  double estimate = 0.0;
  double se = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0;
  std::map<std::string, double> constants;
  std::map<std::string, double> thresholds;
  std::vector<SweepEntry> sweep;
  bool pass = false;
  double excluded_fraction = 0.0;
  std::vector<std::string> flags;
};

/// E int_0^{1-eps} |d log q_{1-s}(., z0)(X_i(y_s))| ds estimated per eps by
/// trapezoid-in-time and Monte Carlo over the bridge ensemble (which must
/// carry recorded drift components and cutoff <= min eps). Pass: relative
/// change over the final eps halving <= 15%.
VerificationReport semimartingale_integral(const BridgeEnsemble& ensemble, int field_index,
                                           std::vector<double> eps_sweep,
                                           double stabilization_tol = 0.15);

struct KolmogorovOptions {
  double p = 4.0;
  std::vector<double> lags;        // |t-s| values; all <= t0
  double t0 = 0.25;                // proof-side restriction on |t-s|
  double base_lo = 0.0, base_hi = 1.0;  // window for the earlier time s
  int base_stride = 50;            // path steps between bases
};

/// Fits log E rho^p(y_s, y_t) against log |t-s|; delta_hat = slope - 1.
/// Pass: delta_hat > 0 at 2 sigma.
VerificationReport kolmogorov_fit(const std::vector<SamplePath>& paths, const ModelSpace& space,
                                  const KolmogorovOptions& opts);

struct CylinderFunctional {
  std::string name;
  std::function<double(const SamplePath&)> eval;  // bounded, measurable on [0,t]
};

/// Compares E F(x) e^{N_t} on unconditioned paths with E F(y) on bridge
/// paths for each functional, and checks E e^{N_t} = 1; pass iff every
/// comparison is within 3 combined standard errors. t must be <= 3/4.
VerificationReport weighted_law_check(const std::vector<SamplePath>& unconditioned,
                                      const std::vector<SamplePath>& bridge,
                                      const KernelEstimate& pinned,
                                      const std::vector<CylinderFunctional>& functionals, double t);

struct TimeReversalOptions {
  std::vector<double> fdd_times = {0.25, 0.5, 0.75};
  int n_paths = 600;
  int permutations = 500;
  double significance = 0.01;
  BridgeConfig forward_cfg;  // x0 -> z0 (reverse run derives z0 -> x0)
};

/// Two-sample energy tests of forward-bridge marginals at t against
/// reversed adjoint-bridge marginals at 1-t, plus the kernel duality
/// residual max |q_t(x0,p) - qhat_t(p,x0)| over probe points.
VerificationReport time_reversal_check(const VectorFieldSystem& sys,
                                       const VectorFieldSystem& adjoint,
                                       const KernelEstimate& forward_pinned,
                                       const KernelEstimate& reverse_pinned,
                                       const TimeReversalOptions& opts);

/// Max over probes/times of the duality residual, via one adjoint solve per
/// probe point (torus grid systems).
double kernel_duality_residual(const VectorFieldSystem& sys, const VecRef& x0,
                               const std::vector<Vec>& probes, const std::vector<double>& times,
                               const GridOptions& opts);

struct CaoYauOptions {
  std::vector<double> deltas = {1.5, 2.0, 3.0};
  double t_lo = 0.05, t_hi = 0.3;
  double required_delta = 2.0;  // pass requires this delta (> 1) to fit cleanly
};

/// For each delta, the minimal (C1, C2) with
///   (1/u^2) sum_i |L_{X_i} u|^2 <= delta L_{X0}u/u + delta du/dt / u + C1/t + C2
/// at every usable grid point of the pinned kernel in the window.
VerificationReport caoyau_check(const KernelEstimate& pinned, const VectorFieldSystem& sys,
                                const CaoYauOptions& opts);

struct GradientBoundOptions {
  double t_lo = 0.05, t_hi = 0.3;
  double stability_factor = 2.0;  // fitted C may vary at most this much between half-windows
};

/// Fits the minimal C with |grad_x log q_t(x,z0)|^2 <= C(|ln t|/t + rho^2/t^2)
/// over the window and reports its stability across the two half-windows.
VerificationReport gradient_log_bound_check(const KernelEstimate& pinned,
                                            const VectorFieldSystem& sys,
                                            const GradientBoundOptions& opts);

struct ExpectationIdentityOptions {
  std::vector<double> s_grid = {0.3, 0.5, 0.7};
  double max_rel_discrepancy = 0.05;
};

/// Both sides of the time-derivative identity
///   int q_s(x0,x) d/ds q_{1-s}(x,z0) dx = -int q_{1-s}(x,z0) d/ds q_s(x0,x) dx
/// and of its L_{X0} analogue (divergence-free X0), by Riemann sums on the
/// shared grid. Pass: max relative discrepancy <= 5%.
VerificationReport expectation_identity_check(const KernelEstimate& forward,
                                              const KernelEstimate& pinned,
                                              const VectorFieldSystem& sys,
                                              const ExpectationIdentityOptions& opts);

}  // namespace hypobridge
