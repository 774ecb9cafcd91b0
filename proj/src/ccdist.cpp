#include "hypobridge/ccdist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hypobridge/parallel.hpp"
#include "hypobridge/rng.hpp"

namespace hypobridge {

namespace {

// Polarized Heisenberg group law (x1,y1,z1)*(x2,y2,z2) = (x1+x2, y1+y2, z1+z2+x1*y2).
Vec3 heis_mul(const Vec3& a, const Vec3& b) {
  return Vec3(a[0] + b[0], a[1] + b[1], a[2] + b[2] + a[0] * b[1]);
}
Vec3 heis_inv(const Vec3& a) { return Vec3(-a[0], -a[1], -a[2] + a[0] * a[1]); }

// Translated displacement with symmetric-gauge z (the Levy area coordinate).
void heis_relative(const VecRef& from, const VecRef& to, double* dx, double* dy, double* area) {
  Vec3 rel = heis_mul(heis_inv(Vec3(from)), Vec3(to));
  *dx = rel[0];
  *dy = rel[1];
  *area = rel[2] - 0.5 * rel[0] * rel[1];
}

}  // namespace

Vec integrate_control_path(const VectorFieldSystem& sys, const VecRef& x, const ControlPath& path,
                           int substeps_per_segment) {
  int dim = sys.dim();
  int m = sys.diffusion_count();
  if (path.controls.cols() != m)
    throw std::invalid_argument("integrate_control_path: control width != diffusion count");
  Vec y = sys.space.wrap(x);
  Vec k1(dim), k2(dim), k3(dim), k4(dim), f(dim), tmp(dim);
  auto rhs = [&](const Vec& p, const Eigen::RowVectorXd& a, Vec& out) {
    out.setZero();
    for (int i = 0; i < m; ++i) {
      sys.diffusion[i].eval_into(p, f);
      out += a[i] * f;
    }
  };
  double tau = path.duration / path.n_segments() / substeps_per_segment;
  for (int s = 0; s < path.n_segments(); ++s) {
    Eigen::RowVectorXd a = path.controls.row(s);
    for (int sub = 0; sub < substeps_per_segment; ++sub) {
      rhs(y, a, k1);
      tmp = y + 0.5 * tau * k1;
      rhs(tmp, a, k2);
      tmp = y + 0.5 * tau * k2;
      rhs(tmp, a, k3);
      tmp = y + tau * k3;
      rhs(tmp, a, k4);
      y += tau / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    y = sys.space.wrap(y);
  }
  return y;
}

double cc_distance_lower_bound(const VectorFieldSystem& sys, const VecRef& x, const VecRef& y) {
  double rho = sys.space.distance(x, y);
  switch (sys.space.kind) {
    case ModelKind::Torus2:
      return rho;  // |gamma'| <= 1 for both torus systems
    case ModelKind::Heisenberg3: {
      double dx, dy, area;
      heis_relative(x, y, &dx, &dy, &area);
      double horizontal = std::sqrt(dx * dx + dy * dy);
      double iso = 2.0 * std::sqrt(kPi * std::abs(area)) - horizontal;
      return std::max(horizontal, iso);
    }
    case ModelKind::SU2:
      return rho;
  }
  return 0.0;
}

double cc_distance_quick_upper_bound(const VectorFieldSystem& sys, const VecRef& x, const VecRef& y) {
  if (sys.name == "torus-elliptic") return sys.space.distance(x, y);
  if (sys.space.kind == ModelKind::Heisenberg3) {
    double dx, dy, area;
    heis_relative(x, y, &dx, &dy, &area);
    double chord = std::sqrt(dx * dx + dy * dy);
    return chord + 2.0 * std::sqrt(kPi * std::abs(area));
  }
  return -1.0;
}

namespace {

struct RestartOutcome {
  double duration = std::numeric_limits<double>::infinity();
  double residual = std::numeric_limits<double>::infinity();
  ControlPath path;
  bool feasible = false;
};

RestartOutcome run_restart(const VectorFieldSystem& sys, const Vec& x, const Vec& y,
                           const CcOptions& opts, std::uint64_t seed, int restart) {
  RandomStream rng(seed, 0xcc00 + restart);
  int m = sys.diffusion_count();
  int n = opts.n_segments;
  double rho = sys.space.distance(x, y);
  double quick = cc_distance_quick_upper_bound(sys, x, y);
  double scale = quick > 0.0 ? quick : std::max(2.0 * rho, 0.1);

  Mat controls(n, m);
  for (int s = 0; s < n; ++s) {
    for (int i = 0; i < m; ++i) controls(s, i) = 2.0 * rng.next_uniform() - 1.0;
    double nr = controls.row(s).norm();
    if (nr > 1.0) controls.row(s) /= nr;
  }
  double duration = scale * (0.7 + 0.8 * rng.next_uniform());

  auto objective = [&](const Mat& c, double T, double lambda) {
    ControlPath p{c, T};
    Vec end = integrate_control_path(sys, x, p, opts.substeps);
    double r = sys.space.distance(end, y);
    return T + lambda * r * r;
  };

  double hc = 1e-4;
  Mat grad_c(n, m);
  for (double lambda : opts.lambdas) {
    double obj = objective(controls, duration, lambda);
    int stall = 0;
    for (int iter = 0; iter < opts.max_iterations && stall < 5; ++iter) {
      for (int s = 0; s < n; ++s) {
        for (int i = 0; i < m; ++i) {
          Mat cp = controls, cm = controls;
          cp(s, i) += hc;
          cm(s, i) -= hc;
          grad_c(s, i) = (objective(cp, duration, lambda) - objective(cm, duration, lambda)) / (2.0 * hc);
        }
      }
      double hT = 1e-4 * (1.0 + duration);
      double grad_T = (objective(controls, duration + hT, lambda) -
                       objective(controls, duration - hT, lambda)) / (2.0 * hT);

      double gnorm = std::sqrt(grad_c.squaredNorm() + grad_T * grad_T);
      if (gnorm < 1e-12) break;
      double alpha = 0.5 / gnorm * std::max(1.0, duration);
      bool improved = false;
      for (int bt = 0; bt < 8; ++bt) {
        Mat c_try = controls - alpha * grad_c;
        for (int s = 0; s < n; ++s) {
          double nr = c_try.row(s).norm();
          if (nr > 1.0) c_try.row(s) /= nr;
        }
        double T_try = std::max(1e-6, duration - alpha * grad_T);
        double o = objective(c_try, T_try, lambda);
        if (o < obj) {
          improved = o < obj - 1e-9 * (1.0 + std::abs(obj));
          controls = std::move(c_try);
          duration = T_try;
          obj = o;
          break;
        }
        alpha *= 0.5;
      }
      stall = improved ? 0 : stall + 1;
    }
  }

  RestartOutcome out;
  out.path = ControlPath{controls, duration};
  Vec end = integrate_control_path(sys, x, out.path, opts.substeps);
  out.residual = sys.space.distance(end, y);
  out.duration = duration;
  out.feasible = out.residual <= opts.endpoint_tol;
  return out;
}

}  // namespace

DistanceResult cc_distance(const VectorFieldSystem& sys, const VecRef& x, const VecRef& y,
                           const CcOptions& opts, std::uint64_t seed) {
  if (opts.n_segments < 4) throw std::invalid_argument("cc_distance: n_segments must be >= 4");
  DistanceResult res;
  Vec xw = sys.space.wrap(x), yw = sys.space.wrap(y);
  double rho = sys.space.distance(xw, yw);
  if (rho <= opts.endpoint_tol) {
    res.upper_bound = 0.0;
    res.endpoint_residual = rho;
    res.path.controls = Mat::Zero(0, sys.diffusion_count());
    res.path.duration = 0.0;
    return res;
  }

  std::vector<RestartOutcome> outcomes(opts.restarts);
  parallel_for(static_cast<std::size_t>(opts.restarts), [&](std::size_t r) {
    outcomes[r] = run_restart(sys, xw, yw, opts, seed, static_cast<int>(r));
  });

  // lowest feasible duration wins; lowest restart index breaks ties
  int best = -1;
  for (int r = 0; r < opts.restarts; ++r) {
    if (!outcomes[r].feasible) continue;
    if (best < 0 || outcomes[r].duration < outcomes[best].duration) best = r;
  }
  if (best < 0) {
    for (int r = 0; r < opts.restarts; ++r)
      if (best < 0 || outcomes[r].residual < outcomes[best].residual) best = r;
    res.unreachable = outcomes[best].residual > 10.0 * opts.endpoint_tol;
  }
  res.upper_bound = outcomes[best].duration;
  res.endpoint_residual = outcomes[best].residual;
  res.path = outcomes[best].path;
  return res;
}

CompareFitReport distance_compare_fit(const VectorFieldSystem& sys,
                                      const std::vector<std::pair<Vec, Vec>>& pairs,
                                      const std::function<int(const VecRef&)>& level,
                                      const CcOptions& opts, std::uint64_t seed,
                                      double rho_max) {
  CompareFitReport rep;
  std::vector<std::pair<Vec, Vec>> usable;
  for (const auto& [a, b] : pairs) {
    double rho = sys.space.distance(a, b);
    if (rho > rho_max || rho < 1e-12) continue;
    usable.push_back({a, b});
  }
  rep.pairs.resize(usable.size());
  parallel_for(usable.size(), [&](std::size_t i) {
    PairComparison pc;
    pc.x = usable[i].first;
    pc.y = usable[i].second;
    pc.rho = sys.space.distance(pc.x, pc.y);
    DistanceResult d = cc_distance(sys, pc.x, pc.y, opts, seed + i);
    pc.d_upper = d.upper_bound;
    pc.endpoint_residual = d.endpoint_residual;
    pc.level = level(pc.x);
    rep.pairs[i] = std::move(pc);
  });

  for (const auto& pc : rep.pairs) {
    if (pc.d_upper <= 0.0) continue;
    rep.c_lower = std::max(rep.c_lower, pc.rho / pc.d_upper);
    rep.c_upper = std::max(rep.c_upper, pc.d_upper / std::pow(pc.rho, 1.0 / pc.level));
  }
  rep.c = std::max(rep.c_lower, rep.c_upper);
  for (const auto& pc : rep.pairs) {
    if (pc.d_upper > rep.c * std::pow(pc.rho, 1.0 / pc.level) * (1.0 + 1e-12)) ++rep.upper_violations;
    if (pc.rho / pc.d_upper > rep.c_upper * (1.0 + 1e-12)) ++rep.lower_gap_pairs;
  }
  return rep;
}

namespace {

struct SampleBox {
  // sampling frame around x; `to_point` maps a box sample to model coordinates
  std::function<Vec(RandomStream&)> draw;
  double volume = 0.0;
};

SampleBox make_ball_box(const VectorFieldSystem& sys, const Vec& x, double r) {
  SampleBox box;
  switch (sys.space.kind) {
    case ModelKind::Torus2: {
      double side0 = std::min(sys.space.periods[0], 2.4 * r);
      double side1 = std::min(sys.space.periods[1], 2.4 * r);
      Vec center = x;
      box.volume = side0 * side1;
      ModelSpace space = sys.space;
      box.draw = [center, side0, side1, space](RandomStream& rng) {
        Vec p(2);
        p[0] = center[0] + side0 * (rng.next_uniform() - 0.5);
        p[1] = center[1] + side1 * (rng.next_uniform() - 0.5);
        return space.wrap(p);
      };
      return box;
    }
    case ModelKind::Heisenberg3: {
      double sxy = 1.1 * r;
      double sz = 1.05 * r * r / kPi;  // |area| <= r^2/pi inside the ball
      Vec3 base(x);
      box.volume = (2.0 * sxy) * (2.0 * sxy) * (2.0 * sz);
      box.draw = [base, sxy, sz](RandomStream& rng) {
        double u = sxy * 2.0 * (rng.next_uniform() - 0.5);
        double v = sxy * 2.0 * (rng.next_uniform() - 0.5);
        double w_sym = sz * 2.0 * (rng.next_uniform() - 0.5);
        Vec3 rel(u, v, w_sym + 0.5 * u * v);  // polarized from symmetric gauge
        Vec p(3);
        p = heis_mul(base, rel);
        return p;
      };
      return box;
    }
    case ModelKind::SU2: {
      double s = 1.05 * r;
      Eigen::Vector4d qx = su2_exp_quat(Vec3(x));
      box.volume = std::pow(2.0 * s, 3);  // algebra-chart box (volume in chart coords)
      box.draw = [qx, s](RandomStream& rng) {
        Vec3 xi;
        for (int d = 0; d < 3; ++d) xi[d] = s * 2.0 * (rng.next_uniform() - 0.5);
        return Vec(su2_log_quat(quat_mul(qx, su2_exp_quat(xi))));
      };
      return box;
    }
  }
  throw std::logic_error("make_ball_box: unhandled model");
}

}  // namespace

std::vector<VolumeEstimate> ball_volume_profile(const VectorFieldSystem& sys, const VecRef& x,
                                                const std::vector<double>& radii, int n_mc,
                                                std::uint64_t seed, const CcOptions& opts) {
  if (radii.empty()) return {};
  for (double r : radii)
    if (r <= 0.0) throw std::invalid_argument("ball_volume: radius must be positive");
  double r_max = *std::max_element(radii.begin(), radii.end());
  Vec xw = sys.space.wrap(x);
  SampleBox box = make_ball_box(sys, xw, r_max);

  // one distance decision per point, reused across radii
  std::vector<double> d_lo(n_mc), d_hi(n_mc);
  std::vector<Vec> points(n_mc);
  {
    RandomStream rng(seed, 0xba11);
    for (int i = 0; i < n_mc; ++i) points[i] = box.draw(rng);
  }
  parallel_for(static_cast<std::size_t>(n_mc), [&](std::size_t i) {
    d_lo[i] = cc_distance_lower_bound(sys, xw, points[i]);
    double quick = cc_distance_quick_upper_bound(sys, xw, points[i]);
    double hi = quick > 0.0 ? quick : std::numeric_limits<double>::infinity();
    // optimize only when the sandwich leaves some radius undecided
    bool undecided = false;
    for (double r : radii)
      if (d_lo[i] <= r && hi > r) undecided = true;
    if (undecided && d_lo[i] <= r_max) {
      DistanceResult d = cc_distance(sys, xw, points[i], opts, seed + 31 * i);
      if (!d.unreachable) hi = std::min(hi, d.upper_bound);
    }
    d_hi[i] = hi;
  });

  std::vector<VolumeEstimate> out;
  for (double r : radii) {
    VolumeEstimate v;
    v.n_total = n_mc;
    for (int i = 0; i < n_mc; ++i)
      if (d_hi[i] <= r) ++v.n_inside;
    double p = static_cast<double>(v.n_inside) / n_mc;
    v.volume = box.volume * p;
    v.se = box.volume * std::sqrt(std::max(0.0, p * (1.0 - p) / n_mc));
    out.push_back(v);
  }
  return out;
}

VolumeEstimate ball_volume(const VectorFieldSystem& sys, const VecRef& x, double r, int n_mc,
                           std::uint64_t seed, const CcOptions& opts) {
  return ball_volume_profile(sys, x, {r}, n_mc, seed, opts).front();
}

}  // namespace hypobridge
