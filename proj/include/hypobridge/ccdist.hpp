#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "hypobridge/models.hpp"
#include "hypobridge/types.hpp"

namespace hypobridge {

/// Piecewise-constant control steering gamma' = sum_i a_i X_i(gamma) with
/// |a| <= 1 per segment and equal segment durations.
struct ControlPath {
  Mat controls;         // n_segments x m
  double duration = 0.0;

  int n_segments() const { return static_cast<int>(controls.rows()); }
};

/// Endpoint of the induced curve from x (RK4 per segment).
Vec integrate_control_path(const VectorFieldSystem& sys, const VecRef& x, const ControlPath& path,
                           int substeps_per_segment = 2);

struct CcOptions {
  int n_segments = 32;
  int restarts = 8;
  int max_iterations = 80;
  std::vector<double> lambdas = {10.0, 1e2, 1e3, 1e4};
  double endpoint_tol = 1e-3;
  int substeps = 2;

  static CcOptions coarse() {
    CcOptions o;
    o.n_segments = 6;
    o.restarts = 2;
    o.max_iterations = 40;
    o.lambdas = {10.0, 1e3};
    o.substeps = 1;
    return o;
  }
};

struct DistanceResult {
  double upper_bound = 0.0;
  double endpoint_residual = 0.0;
  ControlPath path;
  bool unreachable = false;
};

/// Upper bound on the intrinsic (control) distance d(x,y): projected-gradient
/// minimization of duration + lambda * rho^2(endpoint, y) with continuation
/// in lambda and deterministic multistart. The returned value is an upper
/// bound; Unreachable flags an optimizer failure, not geometry.
DistanceResult cc_distance(const VectorFieldSystem& sys, const VecRef& x, const VecRef& y,
                           const CcOptions& opts, std::uint64_t seed);

/// Rigorous lower bound on d(x,y) from coordinate projections and field
/// magnitude bounds (model-specific; 0 when nothing applies).
double cc_distance_lower_bound(const VectorFieldSystem& sys, const VecRef& x, const VecRef& y);

/// Cheap admissible-path upper bound (exact flat distance on the elliptic
/// torus, two-phase steering on Heisenberg); negative when unavailable.
double cc_distance_quick_upper_bound(const VectorFieldSystem& sys, const VecRef& x, const VecRef& y);

struct PairComparison {
  Vec x, y;
  double rho = 0.0;
  double d_upper = 0.0;
  double endpoint_residual = 0.0;
  int level = 0;
};

struct CompareFitReport {
  double c = 0.0;        // smallest c with rho/c <= d <= c rho^(1/l) over the sample
  double c_upper = 0.0;  // from the upper inequality alone
  double c_lower = 0.0;  // from the lower inequality alone
  int upper_violations = 0;  // at the fitted c (0 by construction)
  int lower_gap_pairs = 0;   // pairs where the lower side exceeds c_upper
  std::vector<PairComparison> pairs;
};

/// Fits the distance-comparison constant over point pairs (small-rho regime;
/// pairs with rho > rho_max are skipped). `level` maps a point to l(x).
CompareFitReport distance_compare_fit(const VectorFieldSystem& sys,
                                      const std::vector<std::pair<Vec, Vec>>& pairs,
                                      const std::function<int(const VecRef&)>& level,
                                      const CcOptions& opts, std::uint64_t seed,
                                      double rho_max = 0.3);

struct VolumeEstimate {
  double volume = 0.0;
  double se = 0.0;
  int n_inside = 0;
  int n_total = 0;
};

/// Monte Carlo volume of {y : d(x,y) <= r} over a model-specific bounding
/// box, using the lower/upper bound sandwich to decide most points and the
/// coarse optimizer for the boundary shell.
VolumeEstimate ball_volume(const VectorFieldSystem& sys, const VecRef& x, double r, int n_mc,
                           std::uint64_t seed, const CcOptions& opts = CcOptions::coarse());

/// Volumes at several radii reusing one Monte Carlo point set (one distance
/// decision per point at the largest radius's box).
std::vector<VolumeEstimate> ball_volume_profile(const VectorFieldSystem& sys, const VecRef& x,
                                                const std::vector<double>& radii, int n_mc,
                                                std::uint64_t seed,
                                                const CcOptions& opts = CcOptions::coarse());

}  // namespace hypobridge
