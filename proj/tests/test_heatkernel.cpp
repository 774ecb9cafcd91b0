#include "doctest.h"

#include <cmath>

#include "hypobridge/heatkernel.hpp"
#include "hypobridge/rng.hpp"
#include "oracles.hpp"

using namespace hypobridge;

namespace {

Vec v2(double a, double b) { return Vec2(a, b); }
Vec v3(double a, double b, double c) { return Vec3(a, b, c); }

const Vec kSource = v2(0.3, 0.2);

KernelEstimate elliptic_grid(const std::vector<double>& times, int mesh = 96) {
  VectorFieldSystem sys = make_system("torus-elliptic");
  GridOptions opts;
  opts.nodes_per_axis = mesh;
  return solve_heat_grid(sys, kSource, times, opts);
}

}  // namespace

TEST_CASE("elliptic torus grid solve matches the theta-series oracle") {
  KernelEstimate k = elliptic_grid({0.1, 0.2});
  RandomStream rng(99, 0);
  for (std::size_t si = 0; si < k.slices.size(); ++si) {
    double t = k.slices[si].t;
    double worst = 0.0;
    for (int i = 0; i < 40; ++i) {
      Vec y = v2(rng.next_uniform(), rng.next_uniform());
      double exact = oracles::torus2_kernel(t, kSource[0], kSource[1], y[0], y[1]);
      double got = k.value_on_slice(si, y);
      worst = std::max(worst, std::abs(got - exact) / exact);
    }
    CHECK(worst < 0.01);
  }
}

TEST_CASE("grid solve conserves mass at every stored time") {
  KernelEstimate k = elliptic_grid({0.05, 0.1, 0.2, 0.4});
  for (const auto& s : k.slices) CHECK(std::abs(s.mass - 1.0) <= 1e-3);
}

TEST_CASE("chapman-kolmogorov: composing solves matches a direct solve") {
  VectorFieldSystem sys = make_system("torus-grushin");
  KernelEstimate k = solve_heat_grid(sys, kSource, {0.08, 0.2}, GridOptions{});
  Vec composed = evolve_heat_grid(sys, k.slices[0].mesh, k.slices[0].values, 0.08, 0.2);
  double scale = k.slices[1].values.maxCoeff();
  CHECK((composed - k.slices[1].values).cwiseAbs().maxCoeff() / scale < 1e-9);
}

TEST_CASE("grid self-convergence has observed order >= 1.5") {
  std::vector<int> meshes = {24, 48, 96};
  KernelEstimate fine = elliptic_grid({0.1}, 192);
  std::vector<double> errs;
  for (int m : meshes) {
    KernelEstimate k = elliptic_grid({0.1}, m);
    // compare on the coarsest common nodes
    double err = 0.0;
    for (int i = 0; i < 24; ++i) {
      for (int j = 0; j < 24; ++j) {
        Vec p = v2(i / 24.0, j / 24.0);
        err = std::max(err, std::abs(k.value_on_slice(0, p) - fine.value_on_slice(0, p)));
      }
    }
    errs.push_back(err);
  }
  double order1 = std::log2(errs[0] / errs[1]);
  double order2 = std::log2(errs[1] / errs[2]);
  CHECK(order1 >= 1.5);
  CHECK(order2 >= 1.5);
}

TEST_CASE("CFL and delta-initialization guards") {
  VectorFieldSystem sys = make_system("torus-elliptic");
  GridOptions opts;
  opts.dt = 1.0;  // grossly unstable
  CHECK_THROWS_WITH_AS(solve_heat_grid(sys, kSource, {0.1}, opts),
                       doctest::Contains("stability bound"), std::invalid_argument);
  GridOptions opts2;
  CHECK_THROWS_WITH_AS(solve_heat_grid(sys, kSource, {1e-6}, opts2),
                       doctest::Contains("4*dt"), std::invalid_argument);
}

TEST_CASE("grid solver requires axis-aligned divergence-free fields") {
  VectorFieldSystem sys = make_system("torus-elliptic");
  sys.diffusion[0] = make_symbolic_field({Expr(1.0), Expr(0.5)});  // diagonal field
  CHECK_THROWS_AS(solve_heat_grid(sys, kSource, {0.1}, GridOptions{}), std::invalid_argument);
}

TEST_CASE("torus KDE agrees with the grid solve within 3 combined errors") {
  VectorFieldSystem sys = make_system("torus-elliptic");
  KernelEstimate grid = elliptic_grid({0.2});
  KdeOptions kopts;
  KernelEstimate kde = mc_kde_kernel(sys, kSource, {0.2}, 20000, kopts, 1234);
  CHECK(std::abs(kde.slices[0].mass - 1.0) < 0.01);
  RandomStream rng(5, 0);
  for (int i = 0; i < 10; ++i) {
    Vec y = v2(rng.next_uniform(), rng.next_uniform());
    ValueWithError a = kernel_value(kde, 0.2, kSource, y);
    double b = grid.value(0.2, y);
    double tol = 3.0 * (a.se + 0.01 * b);
    CHECK(std::abs(a.value - b) <= tol);
  }
}

TEST_CASE("heisenberg KDE matches the sub-Laplacian quadrature oracle") {
  // oracle self-checks: on-diagonal closed form and 2D marginal
  CHECK(oracles::heisenberg_kernel(0.25, 0, 0, 0) ==
        doctest::Approx(1.0 / (8.0 * 0.25 * 0.25)).epsilon(1e-6));
  {
    double t = 0.25, x = 0.2, y = -0.1;
    int nz = 600;
    double zmax = 1.0, acc = 0.0;
    for (int i = 0; i < nz; ++i) {
      double z = -zmax + (i + 0.5) * (2.0 * zmax / nz);
      acc += oracles::heisenberg_kernel(t, x, y, z) * (2.0 * zmax / nz);
    }
    double marginal = oracles::gauss_pdf(x, t) * oracles::gauss_pdf(y, t);
    CHECK(acc == doctest::Approx(marginal).epsilon(1e-3));
  }

  VectorFieldSystem sys = make_system("heisenberg");
  KdeOptions kopts;
  kopts.bandwidth_scale = 0.7;  // undersmooth: bias well below the MC noise
  KernelEstimate kde = mc_kde_kernel(sys, v3(0, 0, 0), {0.25}, 60000, kopts, 777);
  std::vector<Vec> points = {v3(0.2, 0.0, 0.0), v3(0.0, 0.2, 0.05), v3(0.3, 0.1, 0.0),
                             v3(0.1, 0.2, -0.05), v3(0.0, 0.0, 0.1)};
  for (const Vec& p : points) {
    ValueWithError got = kernel_value(kde, 0.25, v3(0, 0, 0), p);
    double exact = oracles::heisenberg_kernel(0.25, p[0], p[1], p[2]);
    CHECK(std::abs(got.value - exact) <= 3.0 * (got.se + 0.01 * exact));
  }
}

TEST_CASE("KDE standard error scales like 1/sqrt(n)") {
  VectorFieldSystem sys = make_system("torus-elliptic");
  KdeOptions kopts;
  KernelEstimate a = mc_kde_kernel(sys, kSource, {0.2}, 4000, kopts, 31);
  KernelEstimate b = mc_kde_kernel(sys, kSource, {0.2}, 8000, kopts, 32);
  RandomStream rng(6, 0);
  double sa = 0.0, sb = 0.0;
  for (int i = 0; i < 20; ++i) {
    Vec y = v2(rng.next_uniform(), rng.next_uniform());
    sa += kernel_value(a, 0.2, kSource, y).se;
    sb += kernel_value(b, 0.2, kSource, y).se;
  }
  double ratio = sb / sa;  // ~1/sqrt(2), slightly off since the bandwidth shrinks with n
  CHECK(ratio > 0.707 / 1.2);
  CHECK(ratio < 0.707 * 1.2);
}

TEST_CASE("degenerate KDE cloud gets a floored bandwidth and a flag") {
  VectorFieldSystem sys = make_system("torus-elliptic");
  sys.diffusion.pop_back();  // only X1 = d/dx: the y coordinate never moves
  KdeOptions kopts;
  KernelEstimate k = mc_kde_kernel(sys, kSource, {0.01}, 1000, kopts, 5);
  CHECK(k.slices[0].bandwidth_floored);
}

TEST_CASE("kernel_value resolves the stored side and rejects mismatches") {
  KernelEstimate k = elliptic_grid({0.1, 0.2});
  // stored-node query reproduces the stored value
  Vec node = v2(10.0 / 96.0, 20.0 / 96.0);
  double direct = k.value_on_slice(1, node);
  CHECK(kernel_value(k, 0.2, kSource, node).value == doctest::Approx(direct).epsilon(1e-12));
  // symmetric estimate accepts the swapped orientation
  CHECK(kernel_value(k, 0.2, node, kSource).value == doctest::Approx(direct).epsilon(1e-12));
  CHECK_THROWS_AS(kernel_value(k, 0.2, v2(0.9, 0.9), v2(0.8, 0.8)), std::invalid_argument);
  CHECK_THROWS_AS(kernel_value(k, 0.5, kSource, node), std::out_of_range);
  // off-node time interpolation stays close to the oracle
  double mid = kernel_value(k, 0.15, kSource, node).value;
  double exact = oracles::torus2_kernel(0.15, kSource[0], kSource[1], node[0], node[1]);
  CHECK(mid == doctest::Approx(exact).epsilon(0.02));
}

TEST_CASE("log horizontal gradient matches the differentiated theta series") {
  VectorFieldSystem sys = make_system("torus-elliptic");
  Vec z0 = v2(0.7, 0.6);
  KernelEstimate pinned =
      pinning_kernel(sys, z0, {0.15, 0.2, 0.25}, GridOptions{}, KdeOptions{}, 0, 1);
  RandomStream rng(7, 0);
  for (int i = 0; i < 12; ++i) {
    Vec x = v2(rng.next_uniform(), rng.next_uniform());
    HorizontalGradient g = log_horizontal_gradient(pinned, sys, 0.2, x, z0);
    REQUIRE(g.available);
    for (int d = 0; d < 2; ++d) {
      double exact = oracles::theta1d_dx(0.2, x[d] - z0[d]) / oracles::theta1d(0.2, x[d] - z0[d]);
      if (std::abs(exact) < 0.2) continue;  // relative comparison needs a nonzero target
      CHECK(g.directional[d] == doctest::Approx(exact).epsilon(0.01));
    }
  }
  // at the kernel maximum the gradient vanishes
  HorizontalGradient at_max = log_horizontal_gradient(pinned, sys, 0.2, z0, z0);
  REQUIRE(at_max.available);
  CHECK(std::abs(at_max.directional[0]) < 0.05);
  CHECK(std::abs(at_max.directional[1]) < 0.05);
}

TEST_CASE("log gradient reports unavailable below the kernel floor") {
  VectorFieldSystem sys = make_system("torus-elliptic");
  Vec z0 = v2(0.5, 0.5);
  KernelEstimate pinned =
      pinning_kernel(sys, z0, {0.004, 0.006}, GridOptions{}, KdeOptions{}, 0, 2);
  // far tail at a tiny time: kernel mass is concentrated near z0
  HorizontalGradient g = log_horizontal_gradient(pinned, sys, 0.004, v2(0.0, 0.0), z0);
  CHECK_FALSE(g.available);
}

TEST_CASE("time derivative matches the theta series and flags boundaries") {
  KernelEstimate k = elliptic_grid({0.16, 0.18, 0.2, 0.22, 0.24});
  Vec y = v2(0.45, 0.4);
  ValueWithError d = time_derivative(k, 0.2, kSource, y);
  CHECK_FALSE(d.one_sided);
  double exact =
      oracles::theta1d_dt(0.2, y[0] - kSource[0]) * oracles::theta1d(0.2, y[1] - kSource[1]) +
      oracles::theta1d(0.2, y[0] - kSource[0]) * oracles::theta1d_dt(0.2, y[1] - kSource[1]);
  CHECK(d.value == doctest::Approx(exact).epsilon(0.02));
  CHECK(time_derivative(k, 0.16, kSource, y).one_sided);
  CHECK(time_derivative(k, 0.24, kSource, y).one_sided);
  // mass conservation: the integral of the time derivative vanishes
  const MeshSpec& mesh = k.slices[0].mesh;
  Vec dv = (k.slices[3].values - k.slices[1].values) / (k.slices[3].t - k.slices[1].t);
  CHECK(std::abs(dv.sum() * mesh.cell_volume()) < 1e-6);
  // on-diagonal decay at small times
  KernelEstimate small = elliptic_grid({0.02, 0.03, 0.04});
  CHECK(time_derivative(small, 0.03, kSource, kSource).value < 0.0);
}

TEST_CASE("on-diagonal exponent of the elliptic torus is the dimension") {
  std::vector<double> times;
  for (double t = 0.01; t < 0.105; t *= 1.35) times.push_back(t);
  KernelEstimate k = elliptic_grid(times, 128);
  ExponentFit fit = on_diagonal_exponent(k, kSource, 0.0, 1.0);
  CHECK(fit.q_hat > 1.8);
  CHECK(fit.q_hat < 2.2);
  CHECK_THROWS_AS(on_diagonal_exponent(k, kSource, 0.0, 0.02), std::invalid_argument);
}

TEST_CASE("gaussian bound fit holds on the elliptic torus with tight constants") {
  std::vector<double> times = {0.02, 0.05, 0.1, 0.2, 0.3};
  KernelEstimate k = elliptic_grid(times);
  ModelSpace space = ModelSpace::torus2();
  Vec source = k.source;
  auto dist = [space, source](const VecRef& y) { return space.distance(source, y); };
  auto vol = [](double r) { return std::min(1.0, oracles::kPi * r * r); };
  RandomStream rng(8, 0);
  std::vector<Vec> pts;
  for (int i = 0; i < 25; ++i) pts.push_back(v2(rng.next_uniform(), rng.next_uniform()));
  BoundFitOptions opts;
  opts.t_lo = 0.02;
  opts.t_hi = 0.3;
  BoundFitReport rep = check_gaussian_bounds(k, dist, vol, pts, opts);
  CHECK(rep.c1 > 0.0);
  CHECK(rep.c1 <= rep.c2);
  CHECK(rep.violation_fraction == 0.0);
  CHECK(std::isfinite(rep.c2));

  // the same fit computed on oracle kernel values lands near the same constants
  double c2_oracle = 0.0, c1_oracle = 1e300;
  for (double t : times) {
    for (const Vec& y : pts) {
      double q = oracles::torus2_kernel(t, source[0], source[1], y[0], y[1]);
      double d = dist(y);
      c2_oracle = std::max(c2_oracle, q * vol(std::sqrt(t)) / std::exp(-opts.c4 * d * d / t));
      c1_oracle = std::min(c1_oracle, q * vol(std::sqrt(t)) / std::exp(-opts.c3 * d * d / t));
    }
  }
  CHECK(rep.c2 == doctest::Approx(c2_oracle).epsilon(0.1));
  CHECK(rep.c1 == doctest::Approx(c1_oracle).epsilon(0.1));
}
