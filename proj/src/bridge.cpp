#include "hypobridge/bridge.hpp"

#include <cmath>
#include <stdexcept>

#include "hypobridge/parallel.hpp"
#include "hypobridge/rng.hpp"
#include "hypobridge/sde.hpp"

namespace hypobridge {

void BridgeConfig::validate() const {
  if (!(dt > 0.0) || !(cutoff > dt) || !(cutoff < 1.0))
    throw std::invalid_argument("BridgeConfig: need 0 < dt < cutoff < 1");
  if (!(clamp_norm > 0.0)) throw std::invalid_argument("BridgeConfig: clamp_norm must be positive");
  if (horizon != 1.0) throw std::invalid_argument("BridgeConfig: the bridge horizon is 1");
  if (x0.size() != z0.size()) throw std::invalid_argument("BridgeConfig: endpoint dimensions differ");
}

SamplePath simulate_diffusion(const VectorFieldSystem& sys, const VecRef& x0, double horizon,
                              double dt, std::uint64_t seed, std::uint64_t stream,
                              const PathRecording& rec) {
  if (!(horizon > 0.0) || !(dt > 0.0)) throw std::invalid_argument("simulate_diffusion: bad grid");
  int n = static_cast<int>(std::lround(horizon / dt));
  if (std::abs(n * dt - horizon) > 1e-9 * horizon)
    throw std::invalid_argument("simulate_diffusion: horizon must be a multiple of dt");
  int dim = sys.dim();
  int m = sys.diffusion_count();

  SamplePath path;
  path.dt = dt;
  path.horizon = horizon;
  path.seed = seed;
  path.stream = stream;
  path.states.resize(n + 1, dim);
  if (rec.noise) path.noise.resize(n, m);

  RandomStream rng(seed, stream);
  HeunStepper stepper(sys);
  Vec y = sys.space.wrap(x0);
  Vec dw(m);
  double sd = std::sqrt(dt);
  path.states.row(0) = y;
  for (int s = 0; s < n; ++s) {
    for (int i = 0; i < m; ++i) dw[i] = sd * rng.next_normal();
    if (rec.noise) path.noise.row(s) = dw;
    stepper.step(y, s * dt, dt, dw);
    if (!y.allFinite())
      throw std::runtime_error("simulate_diffusion: non-finite state at step " + std::to_string(s));
    path.states.row(s + 1) = y;
  }
  return path;
}

std::vector<SamplePath> simulate_diffusion_ensemble(const VectorFieldSystem& sys, const VecRef& x0,
                                                    double horizon, double dt, int n_paths,
                                                    std::uint64_t seed, const PathRecording& rec) {
  std::vector<SamplePath> paths(n_paths);
  Vec start = Vec(x0);
  parallel_for(static_cast<std::size_t>(n_paths), [&](std::size_t p) {
    paths[p] = simulate_diffusion(sys, start, horizon, dt, seed, p, rec);
  });
  return paths;
}

Vec steer_point(const ModelSpace& space, const VecRef& from, const VecRef& to, double fraction) {
  fraction = std::clamp(fraction, 0.0, 1.0);
  switch (space.kind) {
    case ModelKind::Torus2: {
      Vec p(2);
      for (int d = 0; d < 2; ++d)
        p[d] = from[d] + fraction * wrapped_diff(to[d], from[d], space.periods[d]);
      return space.wrap(p);
    }
    case ModelKind::Heisenberg3: {
      // group-translated displacement, symmetric-gauge area coordinate
      double ax = from[0], ay = from[1];
      double dx = to[0] - ax, dy = to[1] - ay;
      double dz = to[2] - from[2] - ax * dy;
      double area = dz - 0.5 * dx * dy;
      double chord = std::sqrt(dx * dx + dy * dy);
      double radius = std::sqrt(std::abs(area) / kPi);
      double loop = 2.0 * kPi * radius;
      double total = chord + loop;
      if (total < 1e-15) return from;
      double s = fraction * total;
      double u, v, zt;  // translated frame, zt in symmetric gauge
      if (s <= chord || loop == 0.0) {
        double f = chord > 0.0 ? s / chord : 0.0;
        u = f * dx;
        v = f * dy;
        zt = 0.0;
      } else {
        double sigma = area >= 0.0 ? -1.0 : 1.0;  // p(phi) below traverses clockwise for sigma=+1
        double phi = (s - chord) / radius;
        u = dx + radius * (1.0 - std::cos(phi));
        v = dy + sigma * radius * std::sin(phi);
        zt = 0.5 * (sigma * radius * (dx + radius) * std::sin(phi) +
                    radius * dy * (std::cos(phi) - 1.0) - sigma * radius * radius * phi);
      }
      Vec p(3);
      p[0] = ax + u;
      p[1] = ay + v;
      p[2] = from[2] + (zt + 0.5 * u * v) + ax * v;  // polarized gauge, left-translated
      return p;
    }
    case ModelKind::SU2: {
      Eigen::Vector4d qa = su2_exp_quat(Vec3(from));
      Eigen::Vector4d qb = su2_exp_quat(Vec3(to));
      Vec3 xi = su2_log_quat(quat_mul(quat_conj(qa), qb));
      return su2_log_quat(quat_mul(qa, su2_exp_quat(fraction * xi)));
    }
  }
  return from;
}

namespace {

struct BridgeAttempt {
  SamplePath path;
  bool aborted = false;
  int clamped_steps = 0;
};

BridgeAttempt attempt_bridge(const BridgeConfig& cfg, const VectorFieldSystem& sys,
                             const KernelEstimate& pinned, std::uint64_t stream,
                             const PathRecording& rec) {
  int n = static_cast<int>(std::lround(1.0 / cfg.dt));
  int dim = sys.dim();
  int m = sys.diffusion_count();

  BridgeAttempt at;
  SamplePath& path = at.path;
  path.dt = cfg.dt;
  path.horizon = 1.0;
  path.seed = cfg.seed;
  path.stream = stream;
  path.states.resize(n + 1, dim);
  path.drift_clamped.assign(n, 0);
  if (rec.noise) path.noise.resize(n, m);
  if (rec.drift_components) path.drift_log = Mat::Zero(n, m);

  RandomStream rng(cfg.seed, stream);
  HeunStepper stepper(sys);
  Vec y = sys.space.wrap(cfg.x0);
  Vec z0 = sys.space.wrap(cfg.z0);
  Vec dw(m), f(dim);
  double sd = std::sqrt(cfg.dt);
  double t_sde_end = 1.0 - cfg.cutoff;
  path.states.row(0) = y;

  int current_step = -1;
  bool clamp_this_step = false;
  Vec base_components = Vec::Zero(m);
  // h-transform drift; evaluated at both Heun stages, components recorded at
  // the base stage
  ExtraDrift drift = [&](double t, const VecRef& p, Vec& out) {
    HorizontalGradient g = log_horizontal_gradient(pinned, sys, 1.0 - t, p, z0);
    if (!g.available) return false;
    out.setZero();
    for (int i = 0; i < m; ++i) {
      sys.diffusion[i].eval_into(p, f);
      out += g.directional[i] * f;
    }
    double norm = out.norm();
    if (norm > cfg.clamp_norm) {
      out *= cfg.clamp_norm / norm;
      clamp_this_step = true;
    }
    if (std::abs(t - current_step * cfg.dt) < 1e-12) base_components = g.directional;
    return true;
  };

  for (int s = 0; s < n; ++s) {
    double t = s * cfg.dt;
    if (t >= t_sde_end - 1e-12) break;
    for (int i = 0; i < m; ++i) dw[i] = sd * rng.next_normal();
    if (rec.noise) path.noise.row(s) = dw;
    current_step = s;
    clamp_this_step = false;
    if (!stepper.step(y, t, cfg.dt, dw, drift)) {
      at.aborted = true;
      return at;
    }
    if (!y.allFinite()) {
      at.aborted = true;
      return at;
    }
    path.drift_clamped[s] = clamp_this_step ? 1 : 0;
    if (clamp_this_step) ++at.clamped_steps;
    if (rec.drift_components) path.drift_log.row(s) = base_components;
    path.states.row(s + 1) = y;
  }

  // epsilon-pinning: noise frozen, deterministic steering to z0
  int s_pin = static_cast<int>(std::lround(t_sde_end / cfg.dt));
  Vec anchor = path.states.row(s_pin);
  for (int s = s_pin; s < n; ++s) {
    double fraction = (static_cast<double>(s + 1) * cfg.dt - t_sde_end) / cfg.cutoff;
    path.states.row(s + 1) = steer_point(sys.space, anchor, z0, fraction);
    if (rec.noise) path.noise.row(s).setZero();
  }
  return at;
}

}  // namespace

SamplePath simulate_bridge(const BridgeConfig& cfg, const VectorFieldSystem& sys,
                           const KernelEstimate& pinned, std::uint64_t stream,
                           const PathRecording& rec) {
  cfg.validate();
  if (pinned.side != KernelSide::Pinned && !pinned.symmetric)
    throw std::invalid_argument("simulate_bridge: kernel must be pinned at z0");
  if (pinned.t_min() > cfg.cutoff || pinned.t_max() < 1.0)
    throw std::invalid_argument("simulate_bridge: pinned kernel does not cover [cutoff, 1]");

  BridgeAttempt at = attempt_bridge(cfg, sys, pinned, stream, rec);
  if (at.aborted) {
    // one retry with fresh noise
    at = attempt_bridge(cfg, sys, pinned, stream + 0x8000000000000000ull, rec);
    if (at.aborted) at.path.failed = true;
  }
  return at.path;
}

BridgeEnsemble simulate_bridge_ensemble(const BridgeConfig& cfg, const VectorFieldSystem& sys,
                                        const KernelEstimate& pinned, int n_paths,
                                        const PathRecording& rec) {
  BridgeEnsemble ens;
  ens.cfg = cfg;
  std::vector<SamplePath> all(n_paths);
  parallel_for(static_cast<std::size_t>(n_paths), [&](std::size_t p) {
    all[p] = simulate_bridge(cfg, sys, pinned, p, rec);
  });
  int failed = 0;
  std::size_t clamped = 0, steps = 0;
  for (auto& p : all) {
    if (p.failed) {
      ++failed;
      continue;
    }
    for (std::uint8_t c : p.drift_clamped) clamped += c;
    steps += p.drift_clamped.size();
    ens.paths.push_back(std::move(p));
  }
  ens.failure_fraction = static_cast<double>(failed) / n_paths;
  ens.clamped_step_fraction = steps ? static_cast<double>(clamped) / steps : 0.0;
  return ens;
}

GirsanovWeight girsanov_weight(const SamplePath& path, const KernelEstimate& pinned, double t) {
  if (t >= 1.0) throw std::invalid_argument("girsanov_weight: t must be < 1");
  if (pinned.side != KernelSide::Pinned && !pinned.symmetric)
    throw std::invalid_argument("girsanov_weight: kernel must be pinned at z0");
  Vec xt = path.state_at(t);
  Vec x0 = path.states.row(0);
  double denom = pinned.value(1.0, x0);
  if (!(denom > 0.0)) throw std::runtime_error("girsanov_weight: q_1(x0, z0) not positive");
  double floor = kKernelFloorRel * pinned.slices[pinned.nearest_slice(1.0 - t)].values.maxCoeff();
  double num = pinned.value(1.0 - t, xt);
  GirsanovWeight w;
  if (num <= floor) {
    w.weight = 0.0;
    w.floored = true;
    return w;
  }
  w.weight = num / denom;
  return w;
}

}  // namespace hypobridge
