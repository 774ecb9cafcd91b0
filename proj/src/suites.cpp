#include "hypobridge/suites.hpp"

#include <cmath>
#include <stdexcept>

#include "hypobridge/bridge.hpp"
#include "hypobridge/ccdist.hpp"
#include "hypobridge/heatkernel.hpp"
#include "hypobridge/rng.hpp"
#include "hypobridge/stats.hpp"

namespace hypobridge {

std::vector<double> dense_time_grid() {
  std::vector<double> t;
  for (double v = 0.004; v < 0.19; v *= 1.45) t.push_back(v);
  for (int i = 0; i <= 32; ++i) t.push_back(0.2 + i * 0.025);
  return t;
}

namespace {

std::vector<double> geometric_grid(double lo, double hi, int n) {
  std::vector<double> t;
  double ratio = std::pow(hi / lo, 1.0 / (n - 1));
  double v = lo;
  for (int i = 0; i < n; ++i) {
    t.push_back(v);
    v *= ratio;
  }
  return t;
}

VerificationReport hormander_classification_report(const VectorFieldSystem& sys,
                                                   const std::vector<Vec>& points,
                                                   const std::function<int(const VecRef&)>& expected,
                                                   const std::string& tag) {
  int correct = 0;
  for (const Vec& p : points) {
    HormanderLevel l = hormander_level(sys, p, 4);
    if (l.spanned && l.level == expected(p)) ++correct;
  }
  VerificationReport rep;
  rep.statistic = "hormander_classification_" + tag;
  rep.estimate = static_cast<double>(correct) / points.size();
  rep.constants["points"] = static_cast<double>(points.size());
  rep.thresholds["fraction_correct"] = 1.0;
  rep.pass = correct == static_cast<int>(points.size());
  return rep;
}

VerificationReport exponent_report(const ExponentFit& fit, const std::string& tag, double lo,
                                   double hi, bool lower_2sigma_only = false) {
  VerificationReport rep;
  rep.statistic = "on_diagonal_exponent_" + tag;
  rep.estimate = fit.q_hat;
  rep.se = fit.se;
  rep.ci_lo = fit.ci_lo;
  rep.ci_hi = fit.ci_hi;
  rep.thresholds["q_lo"] = lo;
  rep.thresholds["q_hi"] = hi;
  rep.pass = lower_2sigma_only ? fit.ci_lo > lo
                               : fit.q_hat >= lo && fit.q_hat <= hi;
  return rep;
}

VerificationReport mass_report(const KernelEstimate& k, const std::string& tag) {
  double worst = 0.0;
  for (const auto& s : k.slices) worst = std::max(worst, std::abs(s.mass - 1.0));
  VerificationReport rep;
  rep.statistic = "kernel_mass_" + tag;
  rep.estimate = worst;
  rep.thresholds["mass_tol"] = k.mass_tol;
  rep.pass = worst <= k.mass_tol;
  return rep;
}

// --------------------------------------------------------------------------
// baseline: elliptic torus
// --------------------------------------------------------------------------

std::vector<VerificationReport> run_baseline(std::uint64_t seed) {
  std::vector<VerificationReport> reports;
  VectorFieldSystem sys = make_system("torus-elliptic");
  Vec x0 = Vec2(0.3, 0.2), z0 = Vec2(0.7, 0.6);
  std::vector<double> tgrid = dense_time_grid();
  GridOptions gopts;

  KernelEstimate pinned = pinning_kernel(sys, z0, tgrid, gopts, KdeOptions{}, 0, seed);
  KernelEstimate forward = solve_heat_grid(sys, x0, tgrid, gopts);
  reports.push_back(mass_report(forward, "torus_elliptic"));

  // unconditioned / bridge ensembles
  std::vector<SamplePath> uncond =
      simulate_diffusion_ensemble(sys, x0, 0.75, 1e-3, 10000, seed + 1);
  BridgeConfig bcfg;
  bcfg.x0 = x0;
  bcfg.z0 = z0;
  bcfg.dt = 1e-3;
  bcfg.cutoff = 0.025;
  bcfg.seed = seed + 2;
  PathRecording rec;
  rec.drift_components = true;
  BridgeEnsemble bridge = simulate_bridge_ensemble(bcfg, sys, pinned, 3000, rec);

  // Lemma 1: martingale + weighted cylinder laws at t = 1/2
  std::vector<CylinderFunctional> fns;
  fns.push_back({"sin_x_half",
                 [](const SamplePath& p) { return std::sin(2.0 * kPi * p.state_at(0.5)[0]); }});
  fns.push_back({"quadrant_quarter", [](const SamplePath& p) {
                   Vec s = p.state_at(0.25);
                   return s[0] < 0.5 && s[1] < 0.5 ? 1.0 : 0.0;
                 }});
  fns.push_back({"mixed", [](const SamplePath& p) {
                   return std::sin(2.0 * kPi * p.state_at(0.25)[0]) *
                          std::cos(2.0 * kPi * p.state_at(0.5)[1]);
                 }});
  reports.push_back(weighted_law_check(uncond, bridge.paths, pinned, fns, 0.5));

  // Lemma 2: moment scaling, unconditioned and bridge interior
  KolmogorovOptions kopts;
  kopts.lags = {0.002, 0.004, 0.008, 0.016, 0.032};
  kopts.base_lo = 0.05;
  kopts.base_hi = 0.7;
  reports.push_back(kolmogorov_fit(uncond, sys.space, kopts));
  KolmogorovOptions kbridge = kopts;
  kbridge.base_lo = 0.2;
  reports.push_back(kolmogorov_fit(bridge.paths, sys.space, kbridge));

  // Theorem 2 integrand on the elliptic control case
  for (int i = 1; i <= 2; ++i)
    reports.push_back(semimartingale_integral(bridge, i, {0.1, 0.05, 0.025}));

  // Lemma 1 time reversal: symmetric baseline
  {
    VectorFieldSystem adj = adjoint_system(sys);
    KernelEstimate rev_pinned = pinning_kernel(adj, x0, tgrid, gopts, KdeOptions{}, 0, seed + 3);
    TimeReversalOptions topts;
    topts.forward_cfg = bcfg;
    topts.forward_cfg.seed = seed + 4;
    VerificationReport r = time_reversal_check(sys, adj, pinned, rev_pinned, topts);
    r.statistic += "_symmetric";
    reports.push_back(r);
  }

  // time reversal and expectation identities with a constant divergence-free drift
  {
    VectorFieldSystem drift_sys = make_system("torus-elliptic", Vec2(0.3, 0.2));
    VectorFieldSystem drift_adj = adjoint_system(drift_sys);
    KernelEstimate dpinned = pinning_kernel(drift_sys, z0, tgrid, gopts, KdeOptions{}, 0, seed + 5);
    KernelEstimate drev = pinning_kernel(drift_adj, x0, tgrid, gopts, KdeOptions{}, 0, seed + 6);
    TimeReversalOptions topts;
    topts.forward_cfg.x0 = x0;
    topts.forward_cfg.z0 = z0;
    topts.forward_cfg.dt = 1e-3;
    topts.forward_cfg.cutoff = 0.025;
    topts.forward_cfg.seed = seed + 7;
    VerificationReport r = time_reversal_check(drift_sys, drift_adj, dpinned, drev, topts);
    r.statistic += "_drift";
    reports.push_back(r);

    KernelEstimate dforward = solve_heat_grid(drift_sys, x0, tgrid, gopts);
    VerificationReport e2 = expectation_identity_check(dforward, dpinned, drift_sys, {});
    e2.statistic += "_drift";
    reports.push_back(e2);
  }
  reports.push_back(expectation_identity_check(forward, pinned, sys, {}));

  // section-3 inequalities on the elliptic kernel
  reports.push_back(caoyau_check(pinned, sys, {}));
  reports.push_back(gradient_log_bound_check(pinned, sys, {}));

  // on-diagonal exponent (elliptic: Q = dim = 2)
  {
    KernelEstimate small = solve_heat_grid(sys, x0, geometric_grid(0.01, 0.1, 8),
                                           GridOptions{128, {}, 0.9, 1e-3});
    reports.push_back(exponent_report(on_diagonal_exponent(small, x0, 0.0, 1.0),
                                      "torus_elliptic", 1.8, 2.2));
  }
  return reports;
}

// --------------------------------------------------------------------------
// grushin: torus with degenerate second field
// --------------------------------------------------------------------------

std::vector<VerificationReport> run_grushin(std::uint64_t seed) {
  std::vector<VerificationReport> reports;
  VectorFieldSystem sys = make_system("torus-grushin");
  Vec x0 = Vec2(0.3, 0.2), z0 = Vec2(0.7, 0.6);
  std::vector<double> tgrid = dense_time_grid();
  GridOptions gopts;

  // Hormander classification on a grid that hits the degenerate lines exactly
  {
    std::vector<Vec> pts;
    for (int i = 0; i < 24; ++i)
      for (int j = 0; j < 4; ++j) pts.push_back(Vec2(i / 24.0, j / 4.0 + 0.1));
    auto expected = [](const VecRef& p) {
      return std::abs(std::sin(2.0 * kPi * p[0])) > 1e-8 ? 1 : 2;
    };
    reports.push_back(hormander_classification_report(sys, pts, expected, "torus_grushin"));
  }

  KernelEstimate pinned = pinning_kernel(sys, z0, tgrid, gopts, KdeOptions{}, 0, seed);
  reports.push_back(mass_report(pinned, "torus_grushin"));

  BridgeConfig bcfg;
  bcfg.x0 = x0;
  bcfg.z0 = z0;
  bcfg.dt = 1e-3;
  bcfg.cutoff = 0.025;
  bcfg.seed = seed + 11;
  PathRecording rec;
  rec.drift_components = true;
  BridgeEnsemble bridge = simulate_bridge_ensemble(bcfg, sys, pinned, 3000, rec);

  VerificationReport frac;
  frac.statistic = "bridge_failure_fraction_grushin";
  frac.estimate = bridge.failure_fraction;
  frac.thresholds["max_failure_fraction"] = 0.1;
  frac.pass = bridge.failure_fraction <= 0.1;
  reports.push_back(frac);

  for (int i = 1; i <= 2; ++i)
    reports.push_back(semimartingale_integral(bridge, i, {0.1, 0.05, 0.025}));

  KolmogorovOptions kopts;
  kopts.lags = {0.002, 0.004, 0.008, 0.016, 0.032};
  kopts.base_lo = 0.2;
  kopts.base_hi = 0.7;
  reports.push_back(kolmogorov_fit(bridge.paths, sys.space, kopts));

  reports.push_back(caoyau_check(pinned, sys, {}));
  reports.push_back(gradient_log_bound_check(pinned, sys, {}));

  // on-diagonal exponent at a degenerate point: strictly above 2 at 2 sigma
  {
    Vec deg = Vec2(0.0, 0.5);
    KernelEstimate small = solve_heat_grid(sys, deg, geometric_grid(0.02, 0.15, 8),
                                           GridOptions{128, {}, 0.9, 1e-3});
    reports.push_back(
        exponent_report(on_diagonal_exponent(small, deg, 0.0, 1.0), "grushin_degenerate", 2.2, 4.0,
                        /*lower_2sigma_only=*/true));
  }

  // distance comparison in the small-rho regime
  {
    RandomStream rng(seed + 13, 0);
    std::vector<std::pair<Vec, Vec>> pairs;
    for (int i = 0; i < 12; ++i) {
      Vec a = Vec2(rng.next_uniform(), rng.next_uniform());
      double r = 0.05 + 0.2 * rng.next_uniform();
      double phi = 2.0 * kPi * rng.next_uniform();
      Vec b = sys.space.wrap(Vec2(a[0] + r * std::cos(phi), a[1] + r * std::sin(phi)));
      pairs.push_back({a, b});
    }
    auto level = [&sys](const VecRef& p) { return hormander_level(sys, p, 3).level; };
    CcOptions copts;
    copts.n_segments = 16;
    copts.restarts = 4;
    CompareFitReport fit = distance_compare_fit(sys, pairs, level, copts, seed + 14);
    VerificationReport rep;
    rep.statistic = "distance_compare_fit_grushin";
    rep.estimate = fit.c;
    rep.constants["c_upper"] = fit.c_upper;
    rep.constants["c_lower"] = fit.c_lower;
    rep.constants["upper_violations"] = fit.upper_violations;
    rep.constants["lower_gap_pairs"] = fit.lower_gap_pairs;
    rep.thresholds["upper_violations"] = 0.0;
    rep.pass = fit.upper_violations == 0 && std::isfinite(fit.c) && fit.c > 0.0;
    reports.push_back(rep);
  }
  return reports;
}

// --------------------------------------------------------------------------
// heisenberg
// --------------------------------------------------------------------------

std::vector<VerificationReport> run_heisenberg(std::uint64_t seed) {
  std::vector<VerificationReport> reports;
  VectorFieldSystem sys = make_system("heisenberg");
  Vec x0 = Vec3(0.0, 0.0, 0.0);
  Vec z0 = Vec3(0.4, 0.3, 0.08);

  reports.push_back(hormander_classification_report(
      sys, sample_points(sys.space, 1000, seed + 21), [](const VecRef&) { return 2; },
      "heisenberg"));

  // on-diagonal exponent from the KDE kernel at the origin
  {
    KdeOptions kopts;
    kopts.store_cloud = false;
    KernelEstimate k =
        mc_kde_kernel(sys, x0, geometric_grid(0.05, 0.4, 6), 60000, kopts, seed + 22);
    reports.push_back(mass_report(k, "heisenberg_kde"));
    reports.push_back(exponent_report(on_diagonal_exponent(k, x0, 0.0, 1.0), "heisenberg", 3.6, 4.4));
  }

  // bridge via the KDE pinning kernel
  {
    KdeOptions kopts;
    kopts.store_cloud = false;
    KernelEstimate pinned =
        pinning_kernel(sys, z0, dense_time_grid(), GridOptions{}, kopts, 40000, seed + 23);
    BridgeConfig bcfg;
    bcfg.x0 = x0;
    bcfg.z0 = z0;
    bcfg.dt = 1e-3;
    bcfg.cutoff = 0.025;
    bcfg.seed = seed + 24;
    PathRecording rec;
    rec.drift_components = true;
    BridgeEnsemble bridge = simulate_bridge_ensemble(bcfg, sys, pinned, 1200, rec);

    VerificationReport frac;
    frac.statistic = "bridge_failure_fraction_heisenberg";
    frac.estimate = bridge.failure_fraction;
    frac.thresholds["max_failure_fraction"] = 0.1;
    frac.pass = bridge.failure_fraction <= 0.1;
    reports.push_back(frac);

    for (int i = 1; i <= 2; ++i)
      reports.push_back(semimartingale_integral(bridge, i, {0.1, 0.05, 0.025}));

    KolmogorovOptions ko;
    ko.lags = {0.002, 0.004, 0.008, 0.016, 0.032};
    ko.base_lo = 0.2;
    ko.base_hi = 0.7;
    reports.push_back(kolmogorov_fit(bridge.paths, sys.space, ko));
  }

  // intrinsic distance: straight horizontal segment, z-axis scaling, comparison fit
  {
    CcOptions copts;  // full-quality defaults
    DistanceResult straight = cc_distance(sys, x0, Vec3(0.6, 0.0, 0.0), copts, seed + 25);
    VerificationReport rep;
    rep.statistic = "cc_straight_line_heisenberg";
    rep.estimate = straight.upper_bound;
    rep.constants["endpoint_residual"] = straight.endpoint_residual;
    rep.thresholds["target"] = 0.6;
    rep.thresholds["rel_tol"] = 0.01;
    rep.pass = !straight.unreachable && std::abs(straight.upper_bound - 0.6) <= 0.006;
    reports.push_back(rep);

    std::vector<double> zs = {0.05, 0.1, 0.2, 0.4};
    std::vector<double> lz, ld;
    VerificationReport zrep;
    zrep.statistic = "cc_z_axis_scaling_heisenberg";
    for (double z : zs) {
      DistanceResult d = cc_distance(sys, x0, Vec3(0.0, 0.0, z), copts, seed + 26);
      zrep.sweep.push_back({z, d.upper_bound, d.endpoint_residual});
      lz.push_back(std::log(z));
      ld.push_back(std::log(d.upper_bound));
    }
    LineFit f = fit_line(lz, ld);
    zrep.estimate = f.slope;
    zrep.se = f.slope_se;
    zrep.thresholds["exponent"] = 0.5;
    zrep.thresholds["tol"] = 0.05;
    zrep.pass = std::abs(f.slope - 0.5) <= 0.05;
    reports.push_back(zrep);

    RandomStream rng(seed + 27, 0);
    std::vector<std::pair<Vec, Vec>> pairs;
    for (int i = 0; i < 10; ++i) {
      Vec a = Vec3(0.5 * (rng.next_uniform() - 0.5), 0.5 * (rng.next_uniform() - 0.5),
                   0.2 * (rng.next_uniform() - 0.5));
      Vec b = a + Vec3(0.2 * (rng.next_uniform() - 0.5), 0.2 * (rng.next_uniform() - 0.5),
                       0.06 * (rng.next_uniform() - 0.5));
      pairs.push_back({a, b});
    }
    CcOptions fit_opts;
    fit_opts.n_segments = 16;
    fit_opts.restarts = 4;
    CompareFitReport fit = distance_compare_fit(sys, pairs, [](const VecRef&) { return 2; },
                                                fit_opts, seed + 28);
    VerificationReport crep;
    crep.statistic = "distance_compare_fit_heisenberg";
    crep.estimate = fit.c;
    crep.constants["c_upper"] = fit.c_upper;
    crep.constants["c_lower"] = fit.c_lower;
    crep.constants["upper_violations"] = fit.upper_violations;
    crep.thresholds["upper_violations"] = 0.0;
    crep.pass = fit.upper_violations == 0 && std::isfinite(fit.c) && fit.c > 0.0;
    reports.push_back(crep);

    // metric-ball volume growth: log-volume slope ~ homogeneous dimension 4
    std::vector<double> radii = {0.1, 0.16, 0.25, 0.4};
    std::vector<VolumeEstimate> vols =
        ball_volume_profile(sys, x0, radii, 400, seed + 29, CcOptions::coarse());
    std::vector<double> lr, lv;
    VerificationReport vrep;
    vrep.statistic = "ball_volume_slope_heisenberg";
    for (std::size_t i = 0; i < radii.size(); ++i) {
      vrep.sweep.push_back({radii[i], vols[i].volume, vols[i].se});
      lr.push_back(std::log(radii[i]));
      lv.push_back(std::log(vols[i].volume));
    }
    LineFit vf = fit_line(lr, lv);
    vrep.estimate = vf.slope;
    vrep.se = vf.slope_se;
    vrep.thresholds["slope"] = 4.0;
    vrep.thresholds["tol"] = 0.5;
    vrep.pass = std::abs(vf.slope - 4.0) <= 0.5;
    reports.push_back(vrep);
  }
  return reports;
}

// --------------------------------------------------------------------------
// su2 sanity
// --------------------------------------------------------------------------

std::vector<VerificationReport> run_su2(std::uint64_t seed) {
  std::vector<VerificationReport> reports;
  VectorFieldSystem sys = make_system("su2");
  reports.push_back(hormander_classification_report(
      sys, sample_points(sys.space, 200, seed + 31), [](const VecRef&) { return 2; }, "su2"));
  KdeOptions kopts;
  kopts.store_cloud = false;
  KernelEstimate k = mc_kde_kernel(sys, Vec3(0, 0, 0), {0.1, 0.2, 0.3}, 20000, kopts, seed + 32);
  reports.push_back(mass_report(k, "su2_kde"));
  return reports;
}

}  // namespace

SuiteResult run_suite(const std::string& name, const SuiteOptions& opts) {
  SuiteResult res;
  res.name = name;
  if (name == "baseline") {
    res.reports = run_baseline(opts.seed);
  } else if (name == "grushin") {
    res.reports = run_grushin(opts.seed);
  } else if (name == "heisenberg") {
    res.reports = run_heisenberg(opts.seed);
  } else if (name == "su2") {
    res.reports = run_su2(opts.seed);
  } else if (name == "full") {
    for (const auto& part : {"baseline", "grushin", "heisenberg", "su2"}) {
      SuiteResult sub = run_suite(part, opts);
      res.reports.insert(res.reports.end(), sub.reports.begin(), sub.reports.end());
    }
  } else {
    throw std::invalid_argument("unknown suite: " + name);
  }
  return res;
}

std::vector<std::string> known_suites() { return {"baseline", "grushin", "heisenberg", "su2", "full"}; }

}  // namespace hypobridge
