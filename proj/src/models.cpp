#include "hypobridge/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hypobridge/rng.hpp"

namespace hypobridge {

namespace {

// (1 - (t/2) cot(t/2)) / t^2 with its small-angle series; the coefficient of
// the u x (u x xi) term in the left-invariant field chart formula.
double dexpinv_coeff(double theta) {
  if (theta < 1e-4) return 1.0 / 12.0 + theta * theta / 720.0;
  double half = 0.5 * theta;
  return (1.0 - half * std::cos(half) / std::sin(half)) / (theta * theta);
}

// cot(t/2) - 2/t, divided by t (gradient factor of the SU2 Haar log-density).
double su2_logdensity_grad_factor(double theta) {
  if (theta < 1e-4) return -1.0 / 6.0 - theta * theta / 180.0;
  double half = 0.5 * theta;
  return (std::cos(half) / std::sin(half) - 2.0 / theta) / theta;
}

}  // namespace

ModelSpace ModelSpace::torus2() {
  ModelSpace s;
  s.kind = ModelKind::Torus2;
  s.dimension = 2;
  s.periods = Vec2(1.0, 1.0);
  return s;
}

ModelSpace ModelSpace::heisenberg3() {
  ModelSpace s;
  s.kind = ModelKind::Heisenberg3;
  s.dimension = 3;
  s.periods = Vec3(0.0, 0.0, 0.0);
  return s;
}

ModelSpace ModelSpace::su2() {
  ModelSpace s;
  s.kind = ModelKind::SU2;
  s.dimension = 3;
  s.periods = Vec3(0.0, 0.0, 0.0);
  return s;
}

double ModelSpace::distance(const VecRef& x, const VecRef& y) const {
  switch (kind) {
    case ModelKind::Torus2: {
      double dx = wrapped_diff(x[0], y[0], periods[0]);
      double dy = wrapped_diff(x[1], y[1], periods[1]);
      return std::sqrt(dx * dx + dy * dy);
    }
    case ModelKind::Heisenberg3:
      return (x - y).norm();
    case ModelKind::SU2: {
      Eigen::Vector4d qx = su2_exp_quat(Vec3(x));
      Eigen::Vector4d qy = su2_exp_quat(Vec3(y));
      return su2_log_quat(quat_mul(quat_conj(qx), qy)).norm();
    }
  }
  return 0.0;
}

Vec ModelSpace::wrap(const VecRef& x) const {
  switch (kind) {
    case ModelKind::Torus2: {
      Vec y(2);
      y[0] = wrap_periodic(x[0], periods[0]);
      y[1] = wrap_periodic(x[1], periods[1]);
      return y;
    }
    case ModelKind::Heisenberg3:
      return x;
    case ModelKind::SU2:
      return su2_log_quat(su2_exp_quat(Vec3(x)));
  }
  return x;
}

double ModelSpace::log_volume_density(const VecRef& x) const {
  if (kind != ModelKind::SU2) return 0.0;
  double theta = x.norm();
  if (theta < 1e-8) return 0.0;
  double half = 0.5 * theta;
  return 2.0 * (std::log(std::sin(half)) - std::log(half));
}

Vec ModelSpace::grad_log_volume_density(const VecRef& x) const {
  if (kind != ModelKind::SU2) return Vec::Zero(dimension);
  return su2_logdensity_grad_factor(x.norm()) * x;
}

VectorField make_symbolic_field(std::vector<Expr> components) {
  VectorField f;
  int dim = static_cast<int>(components.size());
  f.components = components;
  f.eval_into = [components](const VecRef& x, Vec& out) {
    for (std::size_t k = 0; k < components.size(); ++k) out[static_cast<int>(k)] = components[k].eval(x);
  };
  std::vector<std::vector<Expr>> dcomp(dim);
  for (int k = 0; k < dim; ++k) {
    dcomp[k].reserve(dim);
    for (int j = 0; j < dim; ++j) dcomp[k].push_back(components[k].diff(j));
  }
  f.jacobian = [dcomp, dim](const VecRef& x) {
    Mat J(dim, dim);
    for (int k = 0; k < dim; ++k)
      for (int j = 0; j < dim; ++j) J(k, j) = dcomp[k][j].eval(x);
    return J;
  };
  return f;
}

VectorField make_constant_field(const Vec& v) {
  std::vector<Expr> comps;
  comps.reserve(v.size());
  for (int i = 0; i < v.size(); ++i) comps.push_back(Expr(v[i]));
  return make_symbolic_field(std::move(comps));
}

VectorField make_zero_field(int dim) { return make_constant_field(Vec::Zero(dim)); }

VectorField make_su2_field(const Vec3& xi) {
  VectorField f;
  f.algebra = xi;
  Vec3 xi_copy = xi;
  f.eval_into = [xi_copy](const VecRef& x, Vec& out) {
    Vec3 u(x);
    Vec3 uxxi = u.cross(xi_copy);
    out = xi_copy + 0.5 * uxxi + dexpinv_coeff(u.norm()) * u.cross(uxxi);
  };
  return f;
}

VectorFieldSystem make_system(const std::string& name, const Vec& drift) {
  VectorFieldSystem sys;
  sys.name = name;
  bool want_drift = drift.size() > 0 && drift.norm() > 0.0;
  if (name == "torus-elliptic" || name == "torus-grushin") {
    sys.space = ModelSpace::torus2();
    sys.diffusion.push_back(make_symbolic_field({Expr(1.0), Expr(0.0)}));
    if (name == "torus-elliptic")
      sys.diffusion.push_back(make_symbolic_field({Expr(0.0), Expr(1.0)}));
    else
      sys.diffusion.push_back(make_symbolic_field({Expr(0.0), sin(Expr(2.0 * kPi) * Expr::var(0))}));
    Vec2 b = want_drift ? Vec2(drift) : Vec2(0.0, 0.0);
    sys.drift = make_constant_field(b);
    if (name == "torus-elliptic") {
      sys.coefficients = {Expr(b[0]), Expr(b[1])};
    } else if (b[1] == 0.0) {
      sys.coefficients = {Expr(b[0]), Expr(0.0)};
    }
  } else if (name == "heisenberg") {
    if (want_drift) throw std::invalid_argument("heisenberg model takes no drift parameter");
    sys.space = ModelSpace::heisenberg3();
    sys.diffusion.push_back(make_symbolic_field({Expr(1.0), Expr(0.0), Expr(0.0)}));
    sys.diffusion.push_back(make_symbolic_field({Expr(0.0), Expr(1.0), Expr::var(0)}));
    sys.drift = make_zero_field(3);
    sys.coefficients = {Expr(0.0), Expr(0.0)};
  } else if (name == "su2") {
    if (want_drift) throw std::invalid_argument("su2 model takes no drift parameter");
    sys.space = ModelSpace::su2();
    sys.diffusion.push_back(make_su2_field(Vec3(1.0, 0.0, 0.0)));
    sys.diffusion.push_back(make_su2_field(Vec3(0.0, 1.0, 0.0)));
    sys.drift = make_su2_field(Vec3(0.0, 0.0, 0.0));
    sys.coefficients = {Expr(0.0), Expr(0.0)};
  } else {
    throw std::invalid_argument("unknown model: " + name);
  }
  return sys;
}

bool is_known_model(const std::string& name) {
  auto names = known_models();
  return std::find(names.begin(), names.end(), name) != names.end();
}

std::vector<std::string> known_models() {
  return {"torus-elliptic", "torus-grushin", "heisenberg", "su2"};
}

double fd_step(const VecRef& x) { return 1e-5 * (1.0 + x.norm()); }

Mat fd_jacobian(const VectorField& f, const VecRef& x) {
  int dim = static_cast<int>(x.size());
  double h = fd_step(x);
  Mat J(dim, dim);
  Vec xp = x, xm = x, fp(dim), fm(dim);
  for (int j = 0; j < dim; ++j) {
    xp[j] = x[j] + h;
    xm[j] = x[j] - h;
    f.eval_into(xp, fp);
    f.eval_into(xm, fm);
    if (!fp.allFinite() || !fm.allFinite())
      throw std::runtime_error("non-finite field values near point while differentiating");
    J.col(j) = (fp - fm) / (2.0 * h);
    xp[j] = x[j];
    xm[j] = x[j];
  }
  return J;
}

Vec lie_bracket(const VectorField& X, const VectorField& Y, const VecRef& x,
                DerivativeBackend backend) {
  if (backend == DerivativeBackend::Symbolic) {
    if (X.algebra.size() > 0 && Y.algebra.size() > 0) {
      Vec3 b = Vec3(X.algebra).cross(Vec3(Y.algebra));
      return make_su2_field(b).eval(x);
    }
    if (!X.components.empty() && !Y.components.empty())
      return bracket_field(X, Y).eval(x);
    throw std::invalid_argument("symbolic bracket requires symbolic fields on both sides");
  }
  Mat JX = X.jacobian ? X.jacobian(x) : fd_jacobian(X, x);
  Mat JY = Y.jacobian ? Y.jacobian(x) : fd_jacobian(Y, x);
  return JY * X.eval(x) - JX * Y.eval(x);
}

VectorField bracket_field(const VectorField& X, const VectorField& Y) {
  if (X.algebra.size() > 0 && Y.algebra.size() > 0)
    return make_su2_field(Vec3(X.algebra).cross(Vec3(Y.algebra)));
  if (!X.components.empty() && !Y.components.empty()) {
    int dim = static_cast<int>(X.components.size());
    std::vector<Expr> comps;
    comps.reserve(dim);
    for (int k = 0; k < dim; ++k) {
      Expr c(0.0);
      for (int j = 0; j < dim; ++j)
        c = c + X.components[j] * Y.components[k].diff(j) - Y.components[j] * X.components[k].diff(j);
      comps.push_back(c);
    }
    return make_symbolic_field(std::move(comps));
  }
  // FD fallback for mixed representations.
  VectorField Xc = X, Yc = Y;
  VectorField f;
  f.eval_into = [Xc, Yc](const VecRef& x, Vec& out) {
    Mat JX = Xc.jacobian ? Xc.jacobian(x) : fd_jacobian(Xc, x);
    Mat JY = Yc.jacobian ? Yc.jacobian(x) : fd_jacobian(Yc, x);
    out = JY * Xc.eval(x) - JX * Yc.eval(x);
  };
  return f;
}

HormanderLevel hormander_level(const VectorFieldSystem& sys, const VecRef& x, int max_level) {
  if (max_level < 1) throw std::invalid_argument("hormander_level: max_level must be >= 1");
  int dim = sys.dim();
  std::vector<VectorField> all = sys.diffusion;
  std::vector<VectorField> last_level = sys.diffusion;
  HormanderLevel result;
  for (int level = 1; level <= max_level; ++level) {
    if (level >= 2) {
      std::vector<VectorField> next;
      if (level == 2) {
        for (std::size_t i = 0; i < sys.diffusion.size(); ++i)
          for (std::size_t j = i + 1; j < sys.diffusion.size(); ++j)
            next.push_back(bracket_field(sys.diffusion[i], sys.diffusion[j]));
      } else {
        for (const auto& u : last_level)
          for (const auto& xj : sys.diffusion) next.push_back(bracket_field(u, xj));
      }
      for (auto& f : next) all.push_back(f);
      last_level = std::move(next);
    }
    Mat span(dim, static_cast<int>(all.size()));
    for (std::size_t c = 0; c < all.size(); ++c) {
      Vec v = all[c].eval(x);
      if (!v.allFinite()) throw std::runtime_error("non-finite field value in span computation");
      span.col(static_cast<int>(c)) = v;
    }
    Eigen::JacobiSVD<Mat> svd(span);
    const Vec& sv = svd.singularValues();
    double tol = 1e-8 * sv[0];
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
      if (sv[i] > tol) ++rank;
    if (rank == dim) {
      result.spanned = true;
      result.level = level;
      return result;
    }
  }
  result.spanned = false;
  result.level = max_level;
  return result;
}

double divergence(const ModelSpace& space, const VectorField& f, const VecRef& x,
                  DerivativeBackend backend) {
  if (backend == DerivativeBackend::Symbolic && f.algebra.size() > 0)
    return 0.0;  // left-invariant fields on a unimodular group
  double trace = 0.0;
  if (backend == DerivativeBackend::Symbolic && !f.components.empty()) {
    for (std::size_t k = 0; k < f.components.size(); ++k)
      trace += f.components[k].diff(static_cast<int>(k)).eval(x);
  } else {
    Mat J = f.jacobian && backend == DerivativeBackend::Symbolic ? f.jacobian(x) : fd_jacobian(f, x);
    trace = J.trace();
  }
  if (space.kind == ModelKind::SU2) trace += f.eval(x).dot(space.grad_log_volume_density(x));
  return trace;
}

double divergence(const VectorFieldSystem& sys, int field_index, const VecRef& x,
                  DerivativeBackend backend) {
  if (field_index < 0 || field_index > sys.diffusion_count())
    throw std::invalid_argument("divergence: bad field index");
  const VectorField& f = field_index == 0 ? sys.drift : sys.diffusion[field_index - 1];
  return divergence(sys.space, f, x, backend);
}

InvariantDensity InvariantDensity::constant_one() {
  InvariantDensity m;
  m.value = [](const VecRef&) { return 1.0; };
  m.log_grad = [](const VecRef& x) { return Vec::Zero(x.size()); };
  m.is_constant = true;
  return m;
}

VectorFieldSystem adjoint_system(const VectorFieldSystem& sys, const InvariantDensity& m) {
  for (const Vec& p : sample_points(sys.space, 32, 0x5eed)) {
    if (!(m.value(p) > 0.0))
      throw std::invalid_argument("adjoint_system: invariant density must be strictly positive");
  }

  bool divergence_free = true;
  for (const Vec& p : sample_points(sys.space, 16, 0xd1f5)) {
    for (int i = 1; i <= sys.diffusion_count(); ++i)
      if (std::abs(divergence(sys, i, p)) > 1e-10) divergence_free = false;
  }

  VectorFieldSystem adj;
  adj.space = sys.space;
  adj.diffusion = sys.diffusion;
  adj.name = sys.name + "-adjoint";

  if (m.is_constant && divergence_free) {
    // Only the -L_{X0} term of the adjoint survives.
    if (!sys.drift.components.empty()) {
      std::vector<Expr> comps;
      for (const Expr& c : sys.drift.components) comps.push_back(-c);
      adj.drift = make_symbolic_field(std::move(comps));
    } else if (sys.drift.algebra.size() > 0) {
      adj.drift = make_su2_field(-Vec3(sys.drift.algebra));
    } else {
      VectorField d = sys.drift;
      adj.drift.eval_into = [d](const VecRef& x, Vec& out) {
        d.eval_into(x, out);
        out = -out;
      };
    }
    if (!sys.coefficients.empty()) {
      for (const Expr& c : sys.coefficients) adj.coefficients.push_back(-c);
    }
    return adj;
  }

  ModelSpace space = sys.space;
  VectorField drift0 = sys.drift;
  std::vector<VectorField> diff = sys.diffusion;
  InvariantDensity mm = m;
  if (!mm.log_grad) {
    auto value = mm.value;
    mm.log_grad = [value](const VecRef& x) {
      int dim = static_cast<int>(x.size());
      double h = fd_step(x);
      Vec g(dim), xp = Vec(x), xm = Vec(x);
      for (int j = 0; j < dim; ++j) {
        xp[j] += h;
        xm[j] -= h;
        g[j] = (std::log(value(xp)) - std::log(value(xm))) / (2.0 * h);
        xp[j] = x[j];
        xm[j] = x[j];
      }
      return g;
    };
  }
  adj.drift.eval_into = [space, drift0, diff, mm](const VecRef& x, Vec& out) {
    Vec tmp(x.size());
    drift0.eval_into(x, tmp);
    out = -tmp;
    Vec glm = mm.log_grad(x);
    for (const auto& f : diff) {
      f.eval_into(x, tmp);
      double c = divergence(space, f, x) + glm.dot(tmp);
      out += c * tmp;
    }
  };
  return adj;
}

BracketTable build_bracket_table(const VectorFieldSystem& sys, int max_level) {
  BracketTable table;
  table.max_level = max_level;
  int m = sys.diffusion_count();
  struct Word {
    std::string key;
    VectorField field;
  };
  std::vector<Word> level;
  for (int i = 0; i < m; ++i) level.push_back({std::to_string(i + 1), sys.diffusion[i]});
  for (int k = 2; k <= max_level; ++k) {
    std::vector<Word> next;
    for (const auto& w : level) {
      for (int j = 0; j < m; ++j) {
        if (k == 2 && w.key >= std::to_string(j + 1)) continue;  // antisymmetry at level 2
        Word nw;
        nw.key = "[" + w.key + "," + std::to_string(j + 1) + "]";
        nw.field = bracket_field(w.field, sys.diffusion[j]);
        table.entries[nw.key] = nw.field;
        next.push_back(std::move(nw));
      }
    }
    level = std::move(next);
  }
  return table;
}

std::vector<Vec> sample_points(const ModelSpace& space, int n, std::uint64_t seed) {
  RandomStream rng(seed, 0);
  std::vector<Vec> pts;
  pts.reserve(n);
  for (int i = 0; i < n; ++i) {
    Vec p(space.dimension);
    switch (space.kind) {
      case ModelKind::Torus2:
        for (int d = 0; d < 2; ++d) p[d] = rng.next_uniform() * space.periods[d];
        break;
      case ModelKind::Heisenberg3:
        for (int d = 0; d < 3; ++d) p[d] = 3.0 * (rng.next_uniform() - 0.5);
        break;
      case ModelKind::SU2:
        for (int d = 0; d < 3; ++d) p[d] = 1.6 * (rng.next_uniform() - 0.5);
        break;
    }
    pts.push_back(std::move(p));
  }
  return pts;
}

Eigen::Vector4d su2_exp_quat(const Vec3& u) {
  double theta = u.norm();
  Eigen::Vector4d q;
  double half = 0.5 * theta;
  double s = theta < 1e-12 ? 0.5 : std::sin(half) / theta;
  q[0] = std::cos(half);
  q.tail<3>() = s * u;
  return q;
}

Vec3 su2_log_quat(const Eigen::Vector4d& q) {
  double vn = q.tail<3>().norm();
  if (vn < 1e-15) return Vec3::Zero();
  double theta = 2.0 * std::atan2(vn, q[0]);  // in [0, 2*pi)
  return (theta / vn) * q.tail<3>();
}

Eigen::Vector4d quat_mul(const Eigen::Vector4d& a, const Eigen::Vector4d& b) {
  Eigen::Vector4d q;
  Vec3 av = a.tail<3>(), bv = b.tail<3>();
  q[0] = a[0] * b[0] - av.dot(bv);
  q.tail<3>() = a[0] * bv + b[0] * av + av.cross(bv);
  return q;
}

Eigen::Vector4d quat_conj(const Eigen::Vector4d& q) {
  Eigen::Vector4d c = q;
  c.tail<3>() = -c.tail<3>();
  return c;
}

}  // namespace hypobridge
