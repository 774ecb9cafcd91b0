#include "hypobridge/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "hypobridge/parallel.hpp"
#include "hypobridge/stats.hpp"

namespace hypobridge {

namespace {

// central differences of a grid field along mesh axes (periodic wrap)
void grid_gradient(const MeshSpec& mesh, const Vec& u, Mat& grad) {
  int nx = mesh.n[0], ny = mesh.n[1];
  double dx = mesh.node_spacing(0), dy = mesh.node_spacing(1);
  grad.resize(u.size(), 2);
  for (int j = 0; j < ny; ++j) {
    int jp = (j + 1) % ny, jm = (j + ny - 1) % ny;
    for (int i = 0; i < nx; ++i) {
      int ip = (i + 1) % nx, im = (i + nx - 1) % nx;
      std::size_t idx = i + static_cast<std::size_t>(nx) * j;
      grad(idx, 0) = (u[ip + static_cast<std::size_t>(nx) * j] - u[im + static_cast<std::size_t>(nx) * j]) / (2.0 * dx);
      grad(idx, 1) = (u[i + static_cast<std::size_t>(nx) * jp] - u[i + static_cast<std::size_t>(nx) * jm]) / (2.0 * dy);
    }
  }
}

Vec node_point(const MeshSpec& mesh, std::size_t idx) {
  Vec p(mesh.dim());
  std::size_t rem = idx;
  for (int d = 0; d < mesh.dim(); ++d) {
    std::size_t id = rem % static_cast<std::size_t>(mesh.n[d]);
    rem /= static_cast<std::size_t>(mesh.n[d]);
    p[d] = mesh.lo[d] + static_cast<double>(id) * mesh.node_spacing(d);
  }
  return p;
}

// evaluates the fields of `sys` at every node (rows: nodes, cols: dim)
Mat field_on_mesh(const VectorFieldSystem& sys, const MeshSpec& mesh, const VectorField& f) {
  Mat out(mesh.node_count(), sys.dim());
  Vec v(sys.dim());
  for (std::size_t idx = 0; idx < mesh.node_count(); ++idx) {
    f.eval_into(node_point(mesh, idx), v);
    out.row(idx) = v;
  }
  return out;
}

}  // namespace

VerificationReport semimartingale_integral(const BridgeEnsemble& ensemble, int field_index,
                                           std::vector<double> eps_sweep, double stabilization_tol) {
  if (ensemble.paths.empty()) throw std::invalid_argument("semimartingale_integral: empty ensemble");
  int m = static_cast<int>(ensemble.paths.front().drift_log.cols());
  if (m == 0)
    throw std::invalid_argument("semimartingale_integral: ensemble lacks recorded drift components");
  if (field_index < 1 || field_index > m)
    throw std::invalid_argument("semimartingale_integral: field index out of range");
  std::sort(eps_sweep.begin(), eps_sweep.end(), std::greater<double>());
  if (eps_sweep.empty()) throw std::invalid_argument("semimartingale_integral: empty eps sweep");
  if (ensemble.cfg.cutoff > eps_sweep.back() + 1e-12)
    throw std::invalid_argument("semimartingale_integral: ensemble cutoff exceeds smallest eps");

  double dt = ensemble.cfg.dt;
  int n_sde = static_cast<int>(std::lround((1.0 - ensemble.cfg.cutoff) / dt));

  VerificationReport rep;
  rep.statistic = "semimartingale_integral_X" + std::to_string(field_index);
  rep.excluded_fraction = ensemble.failure_fraction;
  rep.thresholds["stabilization_rel_change"] = stabilization_tol;
  if (ensemble.failure_fraction > 0.2) rep.flags.push_back("unreliable");

  for (double eps : eps_sweep) {
    int target = static_cast<int>(std::lround((1.0 - eps) / dt));
    int nodes_end = std::min(target, n_sde - 1);  // base-point samples 0 .. n_sde-1
    std::vector<double> integrals;
    integrals.reserve(ensemble.paths.size());
    for (const auto& path : ensemble.paths) {
      double acc = 0.0;
      for (int s = 0; s <= nodes_end; ++s) {
        double g = std::abs(path.drift_log(s, field_index - 1));
        acc += (s == 0 || s == nodes_end) ? 0.5 * g : g;
      }
      acc *= dt;
      if (target > nodes_end) acc += dt * std::abs(path.drift_log(nodes_end, field_index - 1));
      integrals.push_back(acc);
    }
    MeanEstimate e = mean_se(integrals);
    rep.sweep.push_back({eps, e.mean, e.se});
  }

  rep.estimate = rep.sweep.back().value;
  rep.se = rep.sweep.back().se;
  rep.ci_lo = rep.estimate - 2.0 * rep.se;
  rep.ci_hi = rep.estimate + 2.0 * rep.se;
  if (rep.sweep.size() >= 2) {
    double prev = rep.sweep[rep.sweep.size() - 2].value;
    double rel = prev > 0.0 ? (rep.estimate - prev) / prev : 0.0;
    rep.constants["final_rel_change"] = rel;
    rep.pass = std::abs(rel) <= stabilization_tol;
  } else {
    rep.pass = true;
  }
  return rep;
}

VerificationReport kolmogorov_fit(const std::vector<SamplePath>& paths, const ModelSpace& space,
                                  const KolmogorovOptions& opts) {
  if (!(opts.p > 1.0)) throw std::invalid_argument("kolmogorov_fit: p must be > 1");
  if (paths.empty()) throw std::invalid_argument("kolmogorov_fit: empty ensemble");
  const double dt = paths.front().dt;
  const int n_steps = paths.front().n_steps();

  std::vector<double> log_lags, log_values, log_ses;
  std::size_t usable_pairs = 0;
  std::vector<SweepEntry> sweep;
  for (double lag : opts.lags) {
    if (lag > opts.t0 + 1e-12)
      throw std::invalid_argument("kolmogorov_fit: lag exceeds t0");
    int lag_steps = static_cast<int>(std::lround(lag / dt));
    if (lag_steps < 1) throw std::invalid_argument("kolmogorov_fit: lag below path resolution");
    int b_lo = static_cast<int>(std::ceil(opts.base_lo / dt));
    int b_hi = std::min(n_steps - lag_steps, static_cast<int>(std::floor(opts.base_hi / dt)) - lag_steps);
    if (b_hi < b_lo) continue;
    std::vector<double> per_path(paths.size());
    parallel_for(paths.size(), [&](std::size_t pi) {
      const SamplePath& path = paths[pi];
      double acc = 0.0;
      int count = 0;
      for (int b = b_lo; b <= b_hi; b += opts.base_stride) {
        double rho = space.distance(path.states.row(b), path.states.row(b + lag_steps));
        acc += std::pow(rho, opts.p);
        ++count;
      }
      per_path[pi] = acc / count;
    });
    int n_bases = (b_hi - b_lo) / opts.base_stride + 1;
    usable_pairs += static_cast<std::size_t>(n_bases);
    MeanEstimate e = mean_se(per_path);
    if (!(e.mean > 0.0)) continue;
    sweep.push_back({lag, e.mean, e.se});
    log_lags.push_back(std::log(lag));
    log_values.push_back(std::log(e.mean));
    log_ses.push_back(e.se / e.mean);
  }
  if (usable_pairs < 6) throw std::runtime_error("kolmogorov_fit: fewer than 6 usable pairs");
  if (log_lags.size() < 2) throw std::runtime_error("kolmogorov_fit: not enough lag points");

  LineFit f = fit_line(log_lags, log_values);
  // MC-noise contribution to the slope uncertainty
  double mx = 0.0;
  for (double x : log_lags) mx += x;
  mx /= log_lags.size();
  double sxx = 0.0, prop = 0.0;
  for (std::size_t i = 0; i < log_lags.size(); ++i) sxx += (log_lags[i] - mx) * (log_lags[i] - mx);
  for (std::size_t i = 0; i < log_lags.size(); ++i) {
    double w = (log_lags[i] - mx) / sxx;
    prop += w * w * log_ses[i] * log_ses[i];
  }
  double slope_se = std::max(f.slope_se, std::sqrt(prop));

  VerificationReport rep;
  rep.statistic = "kolmogorov_moment_fit_p" + std::to_string(static_cast<int>(opts.p));
  rep.sweep = sweep;
  rep.constants["slope"] = f.slope;
  rep.constants["log_prefactor"] = f.intercept;
  rep.estimate = f.slope - 1.0;  // delta_hat
  rep.se = slope_se;
  rep.ci_lo = rep.estimate - 2.0 * slope_se;
  rep.ci_hi = rep.estimate + 2.0 * slope_se;
  rep.thresholds["delta_gt_zero_sigmas"] = 2.0;
  rep.pass = rep.ci_lo > 0.0;
  return rep;
}

VerificationReport weighted_law_check(const std::vector<SamplePath>& unconditioned,
                                      const std::vector<SamplePath>& bridge,
                                      const KernelEstimate& pinned,
                                      const std::vector<CylinderFunctional>& functionals, double t) {
  if (t > 0.75 + 1e-12)
    throw std::invalid_argument("weighted_law_check: t must be <= 3/4");
  if (unconditioned.empty() || bridge.empty())
    throw std::invalid_argument("weighted_law_check: empty ensemble");

  std::vector<double> weights(unconditioned.size());
  int floored = 0;
  for (std::size_t i = 0; i < unconditioned.size(); ++i) {
    GirsanovWeight w = girsanov_weight(unconditioned[i], pinned, t);
    weights[i] = w.weight;
    if (w.floored) ++floored;
  }

  VerificationReport rep;
  rep.statistic = "weighted_law_check_t" + std::to_string(t);
  rep.thresholds["agreement_sigmas"] = 3.0;
  rep.excluded_fraction = 0.0;
  rep.constants["floored_weight_fraction"] =
      static_cast<double>(floored) / static_cast<double>(unconditioned.size());

  double ess = effective_sample_size(weights);
  rep.constants["weight_ess"] = ess;
  if (ess < 50.0) rep.flags.push_back("unreliable");

  MeanEstimate mart = mean_se(weights);
  rep.estimate = mart.mean;
  rep.se = mart.se;
  rep.ci_lo = mart.mean - 2.0 * mart.se;
  rep.ci_hi = mart.mean + 2.0 * mart.se;
  bool pass = std::abs(mart.mean - 1.0) <= 3.0 * mart.se;
  rep.constants["martingale_sigmas"] = mart.se > 0.0 ? std::abs(mart.mean - 1.0) / mart.se : 0.0;

  for (const auto& fn : functionals) {
    std::vector<double> weighted(unconditioned.size()), direct(bridge.size());
    for (std::size_t i = 0; i < unconditioned.size(); ++i)
      weighted[i] = weights[i] * fn.eval(unconditioned[i]);
    for (std::size_t i = 0; i < bridge.size(); ++i) direct[i] = fn.eval(bridge[i]);
    MeanEstimate a = mean_se(weighted);
    MeanEstimate b = mean_se(direct);
    double combined = std::sqrt(a.se * a.se + b.se * b.se);
    double sigmas = combined > 0.0 ? std::abs(a.mean - b.mean) / combined : 0.0;
    rep.constants["F_" + fn.name + "_weighted"] = a.mean;
    rep.constants["F_" + fn.name + "_bridge"] = b.mean;
    rep.constants["F_" + fn.name + "_sigmas"] = sigmas;
    if (sigmas > 3.0) pass = false;
  }
  rep.pass = pass;
  return rep;
}

double kernel_duality_residual(const VectorFieldSystem& sys, const VecRef& x0,
                               const std::vector<Vec>& probes, const std::vector<double>& times,
                               const GridOptions& opts) {
  KernelEstimate forward = solve_heat_grid(sys, x0, times, opts);
  VectorFieldSystem adj = adjoint_system(sys);
  double max_rel = 0.0;
  for (const Vec& p : probes) {
    KernelEstimate back = solve_heat_grid(adj, p, times, opts);
    for (std::size_t si = 0; si < times.size(); ++si) {
      double q_xy = forward.value_on_slice(si, p);      // q_t(x0, p)
      double qh_yx = back.value_on_slice(si, Vec(x0));  // qhat_t(p, x0)
      double scale = std::max(forward.slices[si].values.maxCoeff(), 1e-300);
      max_rel = std::max(max_rel, std::abs(q_xy - qh_yx) / scale);
    }
  }
  return max_rel;
}

VerificationReport time_reversal_check(const VectorFieldSystem& sys,
                                       const VectorFieldSystem& adjoint,
                                       const KernelEstimate& forward_pinned,
                                       const KernelEstimate& reverse_pinned,
                                       const TimeReversalOptions& opts) {
  BridgeConfig fwd = opts.forward_cfg;
  fwd.validate();
  BridgeConfig rev = fwd;
  rev.x0 = fwd.z0;
  rev.z0 = fwd.x0;
  rev.seed = fwd.seed ^ 0x7e0e55a1u;

  BridgeEnsemble fe = simulate_bridge_ensemble(fwd, sys, forward_pinned, opts.n_paths);
  BridgeEnsemble re = simulate_bridge_ensemble(rev, adjoint, reverse_pinned, opts.n_paths);

  VerificationReport rep;
  rep.statistic = "time_reversal_check";
  rep.thresholds["significance"] = opts.significance;
  rep.excluded_fraction = std::max(fe.failure_fraction, re.failure_fraction);

  const ModelSpace& space = sys.space;
  auto metric = [&space](const VecRef& a, const VecRef& b) { return space.distance(a, b); };
  bool pass = true;
  double min_p = 1.0;
  int dim = sys.dim();
  for (std::size_t ti = 0; ti < opts.fdd_times.size(); ++ti) {
    double t = opts.fdd_times[ti];
    Mat a(fe.paths.size(), dim), b(re.paths.size(), dim);
    for (std::size_t i = 0; i < fe.paths.size(); ++i) a.row(i) = fe.paths[i].state_at(t);
    for (std::size_t i = 0; i < re.paths.size(); ++i) b.row(i) = re.paths[i].state_at(1.0 - t);
    TwoSampleResult r = energy_distance_test(a, b, metric, opts.permutations,
                                             fwd.seed + 0xe4e1 + 7919 * ti);
    rep.constants["p_value_t" + std::to_string(t)] = r.p_value;
    min_p = std::min(min_p, r.p_value);
    if (r.p_value < opts.significance) pass = false;
  }
  rep.estimate = min_p;

  if (sys.space.kind == ModelKind::Torus2) {
    std::vector<Vec> probes = sample_points(sys.space, 3, fwd.seed + 0xd0a1);
    probes.push_back(sys.space.wrap(fwd.z0));
    double residual =
        kernel_duality_residual(sys, sys.space.wrap(fwd.x0), probes, {0.25, 0.5, 0.75}, GridOptions{});
    rep.constants["duality_max_rel_residual"] = residual;
    rep.thresholds["duality_rel_tol"] = 0.02;
    if (residual > 0.02) pass = false;
  } else {
    rep.flags.push_back("duality_skipped_non_grid_model");
  }
  rep.pass = pass;
  return rep;
}

namespace {

struct EnvelopeFit {
  double c1 = 0.0, c2 = 0.0;
  bool finite = true;
};

// minimal (C1, C2) with C1/t + C2 >= M(t) over the listed (t, M) pairs
EnvelopeFit fit_time_envelope(const std::vector<std::pair<double, double>>& maxima) {
  EnvelopeFit f;
  if (maxima.empty()) {
    f.finite = false;
    return f;
  }
  double m_last = maxima.back().second;
  f.c2 = std::max(0.0, m_last);
  for (const auto& [t, m] : maxima) {
    if (!std::isfinite(m)) {
      f.finite = false;
      return f;
    }
    f.c1 = std::max(f.c1, std::max(0.0, (m - f.c2) * t));
  }
  return f;
}

}  // namespace

VerificationReport caoyau_check(const KernelEstimate& pinned, const VectorFieldSystem& sys,
                                const CaoYauOptions& opts) {
  if (pinned.method != KernelMethod::GridPDE)
    throw std::invalid_argument("caoyau_check: needs a grid kernel with time derivatives");
  if (!(opts.t_lo > 0.0)) throw std::invalid_argument("caoyau_check: window must avoid t = 0");

  const MeshSpec& mesh = pinned.slices.front().mesh;
  std::vector<Mat> diff_fields;
  for (const auto& f : sys.diffusion) diff_fields.push_back(field_on_mesh(sys, mesh, f));
  Mat drift_field = field_on_mesh(sys, mesh, sys.drift);
  bool has_drift = drift_field.cwiseAbs().maxCoeff() > 0.0;

  VerificationReport rep;
  rep.statistic = "caoyau_check";
  rep.thresholds["required_delta"] = opts.required_delta;
  std::size_t total = 0, excluded = 0;

  std::vector<std::vector<std::pair<double, double>>> maxima(opts.deltas.size());
  Mat grad;
  for (std::size_t si = 1; si + 1 < pinned.slices.size(); ++si) {
    const TimeSlice& s = pinned.slices[si];
    if (s.t < opts.t_lo || s.t > opts.t_hi) continue;
    const Vec& u = s.values;
    double floor = kKernelFloorRel * u.maxCoeff();
    Vec dudt = (pinned.slices[si + 1].values - pinned.slices[si - 1].values) /
               (pinned.slices[si + 1].t - pinned.slices[si - 1].t);
    grid_gradient(mesh, u, grad);
    // G(delta) = A - delta * B with A = sum |L_Xi u|^2 / u^2 and
    // B = (L_X0 u + du/dt) / u
    std::vector<double> a_term(u.size()), b_term(u.size());
    std::vector<bool> usable(u.size());
    for (Eigen::Index idx = 0; idx < u.size(); ++idx) {
      ++total;
      usable[idx] = u[idx] > floor;
      if (!usable[idx]) {
        ++excluded;
        continue;
      }
      double sum_lx2 = 0.0;
      for (const auto& fm : diff_fields) {
        double lx = fm(idx, 0) * grad(idx, 0) + fm(idx, 1) * grad(idx, 1);
        sum_lx2 += lx * lx;
      }
      double lx0 = has_drift ? drift_field(idx, 0) * grad(idx, 0) + drift_field(idx, 1) * grad(idx, 1) : 0.0;
      a_term[idx] = sum_lx2 / (u[idx] * u[idx]);
      b_term[idx] = (lx0 + dudt[idx]) / u[idx];
    }
    for (std::size_t di = 0; di < opts.deltas.size(); ++di) {
      double best = -std::numeric_limits<double>::infinity();
      for (Eigen::Index idx = 0; idx < u.size(); ++idx) {
        if (!usable[idx]) continue;
        best = std::max(best, a_term[idx] - opts.deltas[di] * b_term[idx]);
      }
      if (std::isfinite(best)) maxima[di].push_back({s.t, best});
    }
  }
  rep.excluded_fraction = total ? static_cast<double>(excluded) / total : 1.0;

  bool pass = false;
  for (std::size_t di = 0; di < opts.deltas.size(); ++di) {
    EnvelopeFit f = fit_time_envelope(maxima[di]);
    std::ostringstream tag;
    tag << "delta_" << opts.deltas[di];
    rep.constants["C1_" + tag.str()] = f.c1;
    rep.constants["C2_" + tag.str()] = f.c2;
    int violations = 0;
    for (const auto& [t, m] : maxima[di])
      if (m > f.c1 / t + f.c2 + 1e-9 * (1.0 + std::abs(m))) ++violations;
    rep.constants["violations_" + tag.str()] = violations;
    if (opts.deltas[di] == opts.required_delta && opts.deltas[di] > 1.0 && f.finite && violations == 0)
      pass = true;
    if (opts.deltas[di] == opts.required_delta) {
      rep.estimate = f.c1;
      rep.constants["C2"] = f.c2;
    }
  }
  rep.pass = pass;
  return rep;
}

VerificationReport gradient_log_bound_check(const KernelEstimate& pinned,
                                            const VectorFieldSystem& sys,
                                            const GradientBoundOptions& opts) {
  if (pinned.method != KernelMethod::GridPDE)
    throw std::invalid_argument("gradient_log_bound_check: needs a grid kernel");
  const MeshSpec& mesh = pinned.slices.front().mesh;
  const Vec z0 = pinned.source;
  double mid = 0.5 * (opts.t_lo + opts.t_hi);

  double c_all = 0.0, c_first = 0.0, c_second = 0.0;
  std::size_t total = 0, excluded = 0;
  Mat grad;
  for (std::size_t si = 0; si < pinned.slices.size(); ++si) {
    const TimeSlice& s = pinned.slices[si];
    if (s.t < opts.t_lo || s.t > opts.t_hi) continue;
    const Vec& u = s.values;
    double floor = kKernelFloorRel * u.maxCoeff();
    grid_gradient(mesh, u, grad);
    double c_slice = 0.0;
    for (Eigen::Index idx = 0; idx < u.size(); ++idx) {
      ++total;
      if (!(u[idx] > floor)) {
        ++excluded;
        continue;
      }
      Vec p = node_point(mesh, static_cast<std::size_t>(idx));
      double rho = sys.space.distance(p, z0);
      double lhs = (grad(idx, 0) * grad(idx, 0) + grad(idx, 1) * grad(idx, 1)) / (u[idx] * u[idx]);
      double rhs = std::abs(std::log(s.t)) / s.t + rho * rho / (s.t * s.t);
      c_slice = std::max(c_slice, lhs / rhs);
    }
    c_all = std::max(c_all, c_slice);
    if (s.t <= mid)
      c_first = std::max(c_first, c_slice);
    else
      c_second = std::max(c_second, c_slice);
  }

  VerificationReport rep;
  rep.statistic = "gradient_log_bound_check";
  rep.estimate = c_all;
  rep.constants["C"] = c_all;
  rep.constants["C_first_half"] = c_first;
  rep.constants["C_second_half"] = c_second;
  rep.thresholds["stability_factor"] = opts.stability_factor;
  rep.excluded_fraction = total ? static_cast<double>(excluded) / total : 1.0;
  double lo = std::min(c_first, c_second), hi = std::max(c_first, c_second);
  rep.pass = std::isfinite(c_all) && c_all > 0.0 && lo > 0.0 && hi / lo <= opts.stability_factor;
  return rep;
}

VerificationReport expectation_identity_check(const KernelEstimate& forward,
                                              const KernelEstimate& pinned,
                                              const VectorFieldSystem& sys,
                                              const ExpectationIdentityOptions& opts) {
  if (forward.method != KernelMethod::GridPDE || pinned.method != KernelMethod::GridPDE)
    throw std::invalid_argument("expectation_identity_check: needs grid kernels");
  const MeshSpec& mesh = forward.slices.front().mesh;
  if (pinned.slices.front().mesh.n != mesh.n)
    throw std::invalid_argument("expectation_identity_check: kernels use different meshes");

  double q10 = pinned.value(1.0, forward.source);
  if (!(q10 > 0.0)) throw std::runtime_error("expectation_identity_check: q_1(x0,z0) not positive");
  double cell = mesh.cell_volume();

  Mat drift_field = field_on_mesh(sys, mesh, sys.drift);
  bool has_drift = drift_field.cwiseAbs().maxCoeff() > 0.0;

  VerificationReport rep;
  rep.statistic = "expectation_identity_check";
  rep.thresholds["max_rel_discrepancy"] = opts.max_rel_discrepancy;

  struct SidePair {
    double lhs, rhs;
    std::string tag;
  };
  std::vector<SidePair> pairs;
  int dropped = 0;
  Mat grad_f, grad_p;
  for (double s : opts.s_grid) {
    std::size_t a = forward.nearest_slice(s);
    std::size_t b = pinned.nearest_slice(1.0 - s);
    bool interior = a > 0 && a + 1 < forward.slices.size() && b > 0 && b + 1 < pinned.slices.size();
    bool aligned = std::abs(forward.slices[a].t - s) < 1e-9 &&
                   std::abs(pinned.slices[b].t - (1.0 - s)) < 1e-9;
    if (!interior || !aligned) {
      ++dropped;
      continue;
    }
    const Vec& qf = forward.slices[a].values;   // q_s(x0, .)
    const Vec& qp = pinned.slices[b].values;    // q_{1-s}(., z0)
    Vec dqf = (forward.slices[a + 1].values - forward.slices[a - 1].values) /
              (forward.slices[a + 1].t - forward.slices[a - 1].t);
    Vec dqp = (pinned.slices[b + 1].values - pinned.slices[b - 1].values) /
              (pinned.slices[b + 1].t - pinned.slices[b - 1].t);
    // d/ds q_{1-s} = -(d/dt q_t)|_{t=1-s}
    double lhs = (qf.array() * (-dqp.array())).sum() * cell / q10;
    double rhs = -(qp.array() * dqf.array()).sum() * cell / q10;
    pairs.push_back({lhs, rhs, "dt_s" + std::to_string(s)});

    if (has_drift) {
      grid_gradient(mesh, qp, grad_p);
      grid_gradient(mesh, qf, grad_f);
      double l = 0.0, r = 0.0;
      for (Eigen::Index idx = 0; idx < qf.size(); ++idx) {
        double lx0_p = drift_field(idx, 0) * grad_p(idx, 0) + drift_field(idx, 1) * grad_p(idx, 1);
        double lx0_f = drift_field(idx, 0) * grad_f(idx, 0) + drift_field(idx, 1) * grad_f(idx, 1);
        l += qf[idx] * lx0_p;
        r -= qp[idx] * lx0_f;
      }
      pairs.push_back({l * cell / q10, r * cell / q10, "drift_s" + std::to_string(s)});
    }
  }
  if (pairs.empty()) throw std::runtime_error("expectation_identity_check: no usable s points");
  if (dropped > 0) rep.flags.push_back("dropped_boundary_points");

  double global = 0.0;
  for (const auto& p : pairs) global = std::max(global, std::max(std::abs(p.lhs), std::abs(p.rhs)));
  double max_rel = 0.0;
  for (const auto& p : pairs) {
    double scale = std::max({std::abs(p.lhs), std::abs(p.rhs), 0.05 * global, 1e-300});
    double rel = std::abs(p.lhs - p.rhs) / scale;
    rep.constants["lhs_" + p.tag] = p.lhs;
    rep.constants["rhs_" + p.tag] = p.rhs;
    max_rel = std::max(max_rel, rel);
  }
  rep.estimate = max_rel;
  rep.constants["max_rel_discrepancy"] = max_rel;
  rep.excluded_fraction = static_cast<double>(dropped) / (opts.s_grid.size());
  rep.pass = max_rel <= opts.max_rel_discrepancy;
  return rep;
}

}  // namespace hypobridge
