#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hypobridge/models.hpp"
#include "hypobridge/types.hpp"

namespace hypobridge {

enum class KernelMethod { GridPDE, MonteCarloKDE };

/// Which argument of q_t the stored field ranges over.
/// Forward: values(y) = q_t(source, y).  Pinned: values(x) = q_t(x, source).
enum class KernelSide { Forward, Pinned };

/// Uniform rectilinear mesh over a box. Periodic meshes cover one full
/// period per axis with no duplicated endpoint node.
struct MeshSpec {
  Vec lo, hi;
  Eigen::VectorXi n;
  bool periodic = false;

  int dim() const { return static_cast<int>(n.size()); }
  /// Node spacing; periodic meshes place n nodes over one period, others
  /// include both endpoints.
  double node_spacing(int d) const;
  std::size_t node_count() const;
  double cell_volume() const;
};

struct TimeSlice {
  double t = 0.0;
  MeshSpec mesh;
  Vec values;           // node-ordered, index = i0 + n0*(i1 + n1*i2)
  double mass = 0.0;
  Vec bandwidth;        // KDE only
  Mat cloud;            // KDE only, optional (n_paths x dim)
  int cloud_size = 0;   // KDE path count (kept even when the cloud is dropped)
  bool bandwidth_floored = false;
};

struct ValueWithError {
  double value = 0.0;
  double se = 0.0;
  bool one_sided = false;  // time_derivative at a range boundary
};

/// An evaluable approximation of the fundamental solution on one model,
/// from one source point, at a set of stored times. Immutable once built;
/// queries are safe to share across threads.
struct KernelEstimate {
  KernelMethod method = KernelMethod::GridPDE;
  KernelSide side = KernelSide::Forward;
  bool symmetric = false;  // q_t(x,y) = q_t(y,x) (self-adjoint system)
  Vec source;
  std::string model;
  std::uint64_t seed = 0;
  double mass_tol = 1e-3;
  std::vector<TimeSlice> slices;

  double t_min() const { return slices.front().t; }
  double t_max() const { return slices.back().t; }
  /// Raw spatial interpolation at stored-slice index.
  double value_on_slice(std::size_t slice_index, const VecRef& point) const;
  /// Interpolated in space (multilinear) and time (log-linear between stored
  /// times). `point` is the free argument of the stored side.
  double value(double t, const VecRef& point) const;
  /// KDE pointwise standard error (0 for GridPDE).
  double standard_error(double t, const VecRef& point) const;
  std::size_t nearest_slice(double t) const;
};

struct GridOptions {
  int nodes_per_axis = 96;
  std::optional<double> dt;  // override; must satisfy the CFL bound
  double safety = 0.9;       // fraction of the stability limit
  double mass_tol = 1e-3;
};

/// Explicit conservative solve of the forward (density) equation of `sys` on
/// the periodic torus mesh from a delta at x0; slice k approximates
/// q_{t_k}(x0, .). Requires axis-aligned divergence-free diffusion fields.
KernelEstimate solve_heat_grid(const VectorFieldSystem& sys, const VecRef& x0,
                               const std::vector<double>& times, const GridOptions& opts = {});

/// Evolves an arbitrary initial grid field (semigroup access, used by the
/// Chapman-Kolmogorov tests and the expectation-identity quadratures).
Vec evolve_heat_grid(const VectorFieldSystem& sys, const MeshSpec& mesh, const Vec& init,
                     double t0, double t1, const GridOptions& opts = {});

struct KdeOptions {
  double bandwidth_scale = 1.0;  // multiplies the Scott-rule bandwidth
  double dt = 1e-3;
  int lattice_nodes = 0;     // 0 = automatic per axis
  bool store_cloud = true;
  double mass_tol = 1e-3;
};

/// Monte Carlo kernel density estimate of q_t(x0, .) from simulated
/// endpoints at each stored time. Bandwidth h_d = scale * sd_d * n^(-1/(dim+4)).
/// Values are evaluated through a binned lattice with Gaussian smoothing;
/// standard errors come from the retained sample cloud.
KernelEstimate mc_kde_kernel(const VectorFieldSystem& sys, const VecRef& x0,
                             const std::vector<double>& times, int n_paths,
                             const KdeOptions& opts, std::uint64_t seed);

/// Kernel estimate of x -> q_t(x, z0), built by solving/simulating the
/// adjoint system from z0 and using m(x) q_t(x,y) = m(y) qhat_t(y,x) with
/// m = 1 for the built-in (divergence-free) systems. Grid method on the
/// torus, MC-KDE elsewhere.
KernelEstimate pinning_kernel(const VectorFieldSystem& sys, const VecRef& z0,
                              const std::vector<double>& times, const GridOptions& grid_opts,
                              const KdeOptions& kde_opts, int kde_paths, std::uint64_t seed);

/// q_t(x,y) with uncertainty. The estimate fixes one argument at its stored
/// source; the other must match within tolerance (either may for symmetric
/// estimates). Throws outside the stored time range.
ValueWithError kernel_value(const KernelEstimate& k, double t, const VecRef& x, const VecRef& y);

/// Relative kernel floor: below floor_rel * max_slice_value the log-gradient
/// is declared unavailable instead of extrapolated.
constexpr double kKernelFloorRel = 1e-12;

struct HorizontalGradient {
  Vec directional;  // d log q_t(., z0)(X_i(x)) for i = 1..m
  bool available = false;
};

/// Directional derivatives of log q_t(., z0) along the diffusion fields via
/// central differences on the kernel representation (Pinned estimates; z0
/// must match the stored source).
HorizontalGradient log_horizontal_gradient(const KernelEstimate& k, const VectorFieldSystem& sys,
                                           double t, const VecRef& x, const VecRef& z0);

/// d/dt q_t(x,y) by central difference in the stored-time index (one-sided
/// at the range boundary, flagged).
ValueWithError time_derivative(const KernelEstimate& k, double t, const VecRef& x, const VecRef& y);

struct ExponentFit {
  double q_hat = 0.0;  // -2 * slope of log q_t(x,x) vs log t
  double se = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0;  // 2-sigma
  int n_times = 0;
};

/// Least-squares on-diagonal decay exponent over stored times within
/// [t_lo, t_hi]; needs at least 5 stored times in the window.
ExponentFit on_diagonal_exponent(const KernelEstimate& k, const VecRef& x, double t_lo, double t_hi);

struct BoundFitOptions {
  double c3 = 1.0;   // lower-bound exponent constant
  double c4 = 0.25;  // upper-bound exponent constant
  double t_lo = 0.0, t_hi = 1e30;
};

struct BoundFitReport {
  double c1 = 0.0, c2 = 0.0;  // fitted volume-prefactor constants
  double c3 = 0.0, c4 = 0.0;  // exponent constants used
  double violation_fraction = 0.0;
  double excluded_fraction = 0.0;  // below-floor kernel values
  Vec residual_quantiles;          // upper-bound log-residuals at {0.25, 0.5, 0.75, 1}
  double t_lo = 0.0, t_hi = 0.0;
  int points_used = 0;
};

/// Fits the largest C1 / smallest C2 with
///   C1/vol(B_x(sqrt t)) exp(-C3 d^2/t) <= q_t(x,y) <= C2/vol(B_x(sqrt t)) exp(-C4 d^2/t)
/// over the evaluation points and stored times in the window; the base point
/// itself (d = 0) is always part of the evaluation set.
BoundFitReport check_gaussian_bounds(const KernelEstimate& k,
                                     const std::function<double(const VecRef&)>& dist_from_source,
                                     const std::function<double(double)>& ball_volume_at_radius,
                                     const std::vector<Vec>& eval_points,
                                     const BoundFitOptions& opts = {});

}  // namespace hypobridge
