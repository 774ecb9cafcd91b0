#pragma once

#include <cstdint>
#include <vector>

#include "hypobridge/heatkernel.hpp"
#include "hypobridge/models.hpp"
#include "hypobridge/types.hpp"

namespace hypobridge {

/// A discretized trajectory on a uniform time grid over [0, T].
struct SamplePath {
  double dt = 0.0;
  double horizon = 0.0;
  Mat states;      // (n_steps + 1) x dim
  Mat noise;       // n_steps x m, empty unless recorded
  Mat drift_log;   // n_steps x m directional log-derivatives (bridge), empty unless recorded
  std::vector<std::uint8_t> drift_clamped;  // per-step flags (bridge)
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  bool failed = false;

  int n_steps() const { return static_cast<int>(states.rows()) - 1; }
  int step_of(double t) const { return static_cast<int>(std::lround(t / dt)); }
  Vec state_at(double t) const { return states.row(step_of(t)); }
};

struct PathRecording {
  bool noise = false;
  bool drift_components = false;
};

/// Stratonovich Heun integration of dx = sum X_i o dw^i + X0 dt from x0.
SamplePath simulate_diffusion(const VectorFieldSystem& sys, const VecRef& x0, double horizon,
                              double dt, std::uint64_t seed, std::uint64_t stream = 0,
                              const PathRecording& rec = {});

std::vector<SamplePath> simulate_diffusion_ensemble(const VectorFieldSystem& sys, const VecRef& x0,
                                                    double horizon, double dt, int n_paths,
                                                    std::uint64_t seed,
                                                    const PathRecording& rec = {});

struct BridgeConfig {
  Vec x0, z0;
  double horizon = 1.0;
  double dt = 1e-3;
  double cutoff = 0.05;      // epsilon: drift replaced by pinning on [1-eps, 1]
  double clamp_norm = 1e3;   // drift rescaled beyond this magnitude
  std::uint64_t seed = 0;

  void validate() const;
};

/// One bridge path: SDE with drift grad^H log q_{1-t}(., z0) from the pinned
/// kernel on [0, 1-eps], deterministic steering to z0 on [1-eps, 1].
/// A path whose drift is unavailable is retried once with fresh noise and
/// marked failed if that also aborts.
SamplePath simulate_bridge(const BridgeConfig& cfg, const VectorFieldSystem& sys,
                           const KernelEstimate& pinned, std::uint64_t stream = 0,
                           const PathRecording& rec = {});

struct BridgeEnsemble {
  BridgeConfig cfg;
  std::vector<SamplePath> paths;  // successful only
  double failure_fraction = 0.0;
  double clamped_step_fraction = 0.0;
};

BridgeEnsemble simulate_bridge_ensemble(const BridgeConfig& cfg, const VectorFieldSystem& sys,
                                        const KernelEstimate& pinned, int n_paths,
                                        const PathRecording& rec = {});

struct GirsanovWeight {
  double weight = 0.0;
  bool floored = false;  // kernel below floor at x_t; weight 0 still counts in averages
};

/// exp(N_t) = q_{1-t}(x_t, z0) / q_1(x0, z0) evaluated on an unconditioned
/// path through the pinned kernel (z0 = kernel source).
GirsanovWeight girsanov_weight(const SamplePath& path, const KernelEstimate& pinned, double t);

/// Deterministic pinning-phase interpolation used on [1-eps, 1]: wrapped
/// chart-linear on the torus, two-phase horizontal steering on Heisenberg,
/// geodesic chart interpolation on SU(2). fraction in [0,1].
Vec steer_point(const ModelSpace& space, const VecRef& from, const VecRef& to, double fraction);

}  // namespace hypobridge
