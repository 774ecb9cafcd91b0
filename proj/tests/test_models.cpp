#include "doctest.h"

#include <cmath>

#include "hypobridge/models.hpp"
#include "hypobridge/rng.hpp"

using namespace hypobridge;

namespace {
Vec v2(double a, double b) { return Vec2(a, b); }
Vec v3(double a, double b, double c) { return Vec3(a, b, c); }
}  // namespace

TEST_CASE("heisenberg bracket is the vertical field") {
  VectorFieldSystem sys = make_system("heisenberg");
  for (const Vec& p : sample_points(sys.space, 20, 7)) {
    Vec b = lie_bracket(sys.diffusion[0], sys.diffusion[1], p);
    CHECK(b[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(b[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(b[2] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("bracket of a field with itself vanishes") {
  VectorFieldSystem sys = make_system("torus-grushin");
  for (const Vec& p : sample_points(sys.space, 10, 11)) {
    Vec b = lie_bracket(sys.diffusion[1], sys.diffusion[1], p);
    CHECK(b.norm() == doctest::Approx(0.0).epsilon(1e-12));
    Vec fd = lie_bracket(sys.diffusion[1], sys.diffusion[1], p, DerivativeBackend::FiniteDifference);
    CHECK(fd.norm() < 1e-6);
  }
}

TEST_CASE("grushin bracket matches the differentiated coefficient") {
  VectorFieldSystem sys = make_system("torus-grushin");
  for (const Vec& p : sample_points(sys.space, 20, 3)) {
    Vec b = lie_bracket(sys.diffusion[0], sys.diffusion[1], p);
    CHECK(b[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(b[1] == doctest::Approx(2.0 * kPi * std::cos(2.0 * kPi * p[0])).epsilon(1e-10));
  }
}

TEST_CASE("finite-difference brackets agree with symbolic at O(h^2)") {
  for (const char* name : {"torus-grushin", "heisenberg"}) {
    VectorFieldSystem sys = make_system(name);
    double worst = 0.0;
    for (const Vec& p : sample_points(sys.space, 1000, 17)) {
      Vec sym = lie_bracket(sys.diffusion[0], sys.diffusion[1], p);
      Vec fd = lie_bracket(sys.diffusion[0], sys.diffusion[1], p,
                           DerivativeBackend::FiniteDifference);
      worst = std::max(worst, (sym - fd).norm());
    }
    // h ~ 1e-5  =>  O(h^2) ~ 1e-10 with a generous constant
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("su2 chart fields bracket like the algebra") {
  VectorFieldSystem sys = make_system("su2");
  VectorField e3 = make_su2_field(Vec3(0.0, 0.0, 1.0));
  for (const Vec& p : sample_points(sys.space, 25, 23)) {
    Vec sym = lie_bracket(sys.diffusion[0], sys.diffusion[1], p);
    CHECK((sym - e3.eval(p)).norm() < 1e-12);
    // FD on the chart formula must agree with the algebra-level bracket
    Vec fd = lie_bracket(sys.diffusion[0], sys.diffusion[1], p,
                         DerivativeBackend::FiniteDifference);
    CHECK((sym - fd).norm() < 1e-5);
  }
}

TEST_CASE("hormander levels: heisenberg is 2 everywhere") {
  VectorFieldSystem sys = make_system("heisenberg");
  for (const Vec& p : sample_points(sys.space, 50, 5)) {
    HormanderLevel l = hormander_level(sys, p, 3);
    CHECK(l.spanned);
    CHECK(l.level == 2);
  }
}

TEST_CASE("hormander levels: grushin splits by the degeneracy line") {
  VectorFieldSystem sys = make_system("torus-grushin");
  HormanderLevel good = hormander_level(sys, v2(0.25, 0.0), 2);
  CHECK(good.spanned);
  CHECK(good.level == 1);
  HormanderLevel deg = hormander_level(sys, v2(0.0, 0.0), 2);
  CHECK(deg.spanned);
  CHECK(deg.level == 2);
}

TEST_CASE("hormander level is monotone and NotSpanned is reported") {
  VectorFieldSystem sys = make_system("torus-grushin");
  // restrict to the degenerate single field: span never completes
  VectorFieldSystem crippled = sys;
  crippled.diffusion = {sys.diffusion[1]};
  HormanderLevel l = hormander_level(crippled, v2(0.0, 0.3), 4);
  CHECK_FALSE(l.spanned);
  // spanning at level k implies spanning at every k' >= k
  for (int lvl = 2; lvl <= 4; ++lvl) {
    HormanderLevel h = hormander_level(sys, v2(0.0, 0.0), lvl);
    CHECK(h.spanned);
    CHECK(h.level == 2);
  }
}

TEST_CASE("divergences of the built-in fields vanish") {
  for (const char* name : {"torus-elliptic", "torus-grushin", "heisenberg", "su2"}) {
    VectorFieldSystem sys = make_system(name);
    for (const Vec& p : sample_points(sys.space, 10, 29)) {
      for (int i = 0; i <= sys.diffusion_count(); ++i) {
        CHECK(std::abs(divergence(sys, i, p)) < 1e-10);
        CHECK(std::abs(divergence(sys, i, p, DerivativeBackend::FiniteDifference)) < 1e-5);
      }
    }
  }
}

TEST_CASE("divergence of a constructed non-divergence-free field") {
  ModelSpace space = ModelSpace::torus2();
  // X = sin(2 pi x) d/dx has divergence 2 pi cos(2 pi x)
  VectorField f = make_symbolic_field({sin(Expr(2.0 * kPi) * Expr::var(0)), Expr(0.0)});
  Vec p = v2(0.2, 0.4);
  CHECK(divergence(space, f, p) == doctest::Approx(2.0 * kPi * std::cos(2.0 * kPi * 0.2)));
}

TEST_CASE("adjoint of a divergence-free system flips the drift") {
  VectorFieldSystem sys = make_system("torus-elliptic", v2(0.4, -0.7));
  VectorFieldSystem adj = adjoint_system(sys);
  for (const Vec& p : sample_points(sys.space, 10, 31)) {
    CHECK((adj.drift.eval(p) + sys.drift.eval(p)).norm() < 1e-12);
    for (int i = 0; i < 2; ++i)
      CHECK((adj.diffusion[i].eval(p) - sys.diffusion[i].eval(p)).norm() < 1e-12);
  }
  // involution
  VectorFieldSystem back = adjoint_system(adj);
  for (const Vec& p : sample_points(sys.space, 10, 37))
    CHECK((back.drift.eval(p) - sys.drift.eval(p)).norm() < 1e-12);
}

TEST_CASE("adjoint with zero drift is the identity on the generator") {
  VectorFieldSystem sys = make_system("torus-elliptic");
  VectorFieldSystem adj = adjoint_system(sys);
  for (const Vec& p : sample_points(sys.space, 10, 41))
    CHECK(adj.drift.eval(p).norm() < 1e-12);
}

TEST_CASE("adjoint rejects a density with zeros") {
  VectorFieldSystem sys = make_system("torus-elliptic");
  InvariantDensity bad;
  bad.value = [](const VecRef& x) { return std::sin(2.0 * kPi * x[0]); };
  CHECK_THROWS_AS(adjoint_system(sys, bad), std::invalid_argument);
}

TEST_CASE("adjoint drift with a non-constant density (1d check against formula)") {
  // torus system with X1 = d/dx only; m = 1 + 0.5 sin(2 pi x):
  // adjoint drift must be (log m)' X1 . X1 = (log m)' e_x
  VectorFieldSystem sys = make_system("torus-elliptic");
  InvariantDensity m;
  m.value = [](const VecRef& x) { return 1.0 + 0.5 * std::sin(2.0 * kPi * x[0]); };
  VectorFieldSystem adj = adjoint_system(sys, m);
  Vec p = v2(0.15, 0.6);
  double expected = kPi * std::cos(2.0 * kPi * p[0]) / (1.0 + 0.5 * std::sin(2.0 * kPi * p[0]));
  Vec d = adj.drift.eval(p);
  CHECK(d[0] == doctest::Approx(expected).epsilon(1e-5));
  CHECK(std::abs(d[1]) < 1e-5 + std::abs(expected) * 1e-5);
}

TEST_CASE("bracket table antisymmetry and jacobi identity") {
  VectorFieldSystem sys = make_system("heisenberg");
  BracketTable table = build_bracket_table(sys, 3);
  CHECK(table.entries.count("[1,2]") == 1);
  CHECK(table.entries.count("[[1,2],1]") == 1);
  VectorField b12 = bracket_field(sys.diffusion[0], sys.diffusion[1]);
  VectorField b21 = bracket_field(sys.diffusion[1], sys.diffusion[0]);
  for (const Vec& p : sample_points(sys.space, 10, 43)) {
    CHECK((b12.eval(p) + b21.eval(p)).norm() < 1e-12);
    // Jacobi: [[X,Y],X] + [[Y,X],X]... use three distinct fields via the table
    VectorField j1 = bracket_field(table.entries["[1,2]"], sys.diffusion[0]);
    VectorField j2 = bracket_field(bracket_field(sys.diffusion[1], sys.diffusion[0]),
                                   sys.diffusion[0]);
    CHECK((j1.eval(p) + j2.eval(p)).norm() < 1e-12);
  }
}

TEST_CASE("jacobi identity on su2 fields") {
  VectorField e1 = make_su2_field(Vec3(1, 0, 0));
  VectorField e2 = make_su2_field(Vec3(0, 1, 0));
  VectorField e3 = make_su2_field(Vec3(0, 0, 1));
  ModelSpace space = ModelSpace::su2();
  for (const Vec& p : sample_points(space, 8, 47)) {
    Vec j = lie_bracket(bracket_field(e1, e2), e3, p) + lie_bracket(bracket_field(e2, e3), e1, p) +
            lie_bracket(bracket_field(e3, e1), e2, p);
    CHECK(j.norm() < 1e-12);
  }
}

TEST_CASE("model space distances are metrics on sampled triples") {
  for (const char* name : {"torus-elliptic", "heisenberg", "su2"}) {
    ModelSpace space = make_system(name).space;
    auto pts = sample_points(space, 30, 53);
    for (std::size_t i = 0; i + 2 < pts.size(); i += 3) {
      const Vec &a = pts[i], &b = pts[i + 1], &c = pts[i + 2];
      CHECK(space.distance(a, a) == doctest::Approx(0.0).epsilon(1e-12));
      CHECK(space.distance(a, b) == doctest::Approx(space.distance(b, a)).epsilon(1e-9));
      CHECK(space.distance(a, c) <= space.distance(a, b) + space.distance(b, c) + 1e-9);
    }
  }
}

TEST_CASE("torus distance wraps") {
  ModelSpace space = ModelSpace::torus2();
  CHECK(space.distance(v2(0.05, 0.5), v2(0.95, 0.5)) == doctest::Approx(0.1));
}

TEST_CASE("su2 chart round trip and volume density") {
  ModelSpace space = ModelSpace::su2();
  Vec u = v3(0.3, -0.4, 0.5);
  Vec w = space.wrap(u);
  CHECK((u - w).norm() < 1e-12);
  CHECK(space.log_volume_density(v3(0, 0, 0)) == doctest::Approx(0.0));
  double theta = 1.2;
  Vec p = v3(theta, 0.0, 0.0);
  double expected = 2.0 * std::log(std::sin(theta / 2.0) / (theta / 2.0));
  CHECK(space.log_volume_density(p) == doctest::Approx(expected));
}

TEST_CASE("coefficient representation X0 = sum c_k X_k holds where present") {
  VectorFieldSystem sys = make_system("torus-elliptic", v2(0.3, 0.2));
  REQUIRE(sys.coefficients.size() == 2);
  for (const Vec& p : sample_points(sys.space, 8, 59)) {
    Vec combo = Vec::Zero(2);
    for (int k = 0; k < 2; ++k) combo += sys.coefficients[k].eval(p) * sys.diffusion[k].eval(p);
    CHECK((combo - sys.drift.eval(p)).norm() < 1e-12);
  }
}

TEST_CASE("unknown model is rejected") {
  CHECK_THROWS_AS(make_system("torus"), std::invalid_argument);
  CHECK(is_known_model("heisenberg"));
  CHECK_FALSE(is_known_model("banana"));
}
