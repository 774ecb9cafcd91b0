#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hypobridge/symbolic.hpp"
#include "hypobridge/types.hpp"

namespace hypobridge {

enum class ModelKind { Torus2, Heisenberg3, SU2 };

/// A model space in chart coordinates. Torus2 is [0,1)^2 with flat metric,
/// Heisenberg3 is the full group on R^3 (coordinates x,y,z), SU2 is the
/// exponential chart of its Lie algebra (|u| < 2*pi, Haar density in chart).
struct ModelSpace {
  ModelKind kind = ModelKind::Torus2;
  int dimension = 2;
  Vec periods;  // per-coordinate period, 0 = non-periodic

  static ModelSpace torus2();
  static ModelSpace heisenberg3();
  static ModelSpace su2();

  /// Riemannian distance rho: wrapped-flat on the torus, Euclidean on
  /// Heisenberg coordinates, bi-invariant geodesic distance on SU(2).
  double distance(const VecRef& x, const VecRef& y) const;
  /// Canonical chart representative (wraps periodic coordinates).
  Vec wrap(const VecRef& x) const;
  /// log of the volume-measure density in chart coordinates (0 except SU2).
  double log_volume_density(const VecRef& x) const;
  Vec grad_log_volume_density(const VecRef& x) const;
};

/// A smooth vector field on a model space. `eval_into` is the fast path used
/// by integrators; `components` carries exact symbolic coordinates when the
/// field is polynomial/trigonometric, and `algebra` the Lie-algebra element
/// for left-invariant SU(2) fields (brackets are then computed at algebra
/// level). `jacobian` is analytic when available, otherwise callers fall
/// back to central differences with step h = 1e-5 * (1 + |x|).
struct VectorField {
  std::function<void(const VecRef&, Vec&)> eval_into;
  std::vector<Expr> components;
  std::function<Mat(const VecRef&)> jacobian;
  Vec algebra;

  Vec eval(const VecRef& x) const {
    Vec out(x.size());
    eval_into(x, out);
    return out;
  }
  bool has_symbolic() const { return !components.empty() || algebra.size() > 0; }
};

/// Builds a field from symbolic components (fast eval + exact jacobian
/// are derived from them).
VectorField make_symbolic_field(std::vector<Expr> components);
VectorField make_constant_field(const Vec& v);
VectorField make_zero_field(int dim);
/// Left-invariant SU(2) field for the algebra element xi (basis E_k = -i sigma_k / 2,
/// so [E1,E2] = E3 cyclically).
VectorField make_su2_field(const Vec3& xi);

struct VectorFieldSystem {
  ModelSpace space;
  VectorField drift;                // X0
  std::vector<VectorField> diffusion;  // X1..Xm
  std::vector<Expr> coefficients;   // optional c_k with X0 = sum c_k X_k
  std::string name;

  int dim() const { return space.dimension; }
  int diffusion_count() const { return static_cast<int>(diffusion.size()); }
};

/// Built-in systems. Model names accepted by config/CLI:
/// "torus-elliptic", "torus-grushin", "heisenberg", "su2".
/// `drift` (torus models only) adds a constant divergence-free X0.
VectorFieldSystem make_system(const std::string& name, const Vec& drift = Vec());
bool is_known_model(const std::string& name);
std::vector<std::string> known_models();

enum class DerivativeBackend { Symbolic, FiniteDifference };

/// Finite-difference step used by the FD backends at x.
double fd_step(const VecRef& x);
Mat fd_jacobian(const VectorField& f, const VecRef& x);

/// [X,Y](x) = (DY)X - (DX)Y. The symbolic backend requires both fields to
/// carry symbolic components (or SU2 algebra elements); it throws otherwise.
Vec lie_bracket(const VectorField& X, const VectorField& Y, const VecRef& x,
                DerivativeBackend backend = DerivativeBackend::Symbolic);

/// The bracket as a field, symbolic/algebraic when both inputs are, FD-backed
/// otherwise.
VectorField bracket_field(const VectorField& X, const VectorField& Y);

struct HormanderLevel {
  bool spanned = false;
  int level = 0;  // smallest spanning level when spanned, else max tried
};

/// Smallest k <= max_level such that the diffusion fields and their iterated
/// brackets up to level k span the tangent space at x (numerical rank with
/// tolerance 1e-8 * sigma_max).
HormanderLevel hormander_level(const VectorFieldSystem& sys, const VecRef& x, int max_level);

/// Divergence of the field with respect to the model volume measure
/// (Lebesgue for the torus and Heisenberg charts, Haar for SU2).
double divergence(const ModelSpace& space, const VectorField& f, const VecRef& x,
                  DerivativeBackend backend = DerivativeBackend::Symbolic);
double divergence(const VectorFieldSystem& sys, int field_index, const VecRef& x,
                  DerivativeBackend backend = DerivativeBackend::Symbolic);

/// Strictly positive invariant density m. log_grad may be empty (falls back
/// to central differences of log value).
struct InvariantDensity {
  std::function<double(const VecRef&)> value;
  std::function<Vec(const VecRef&)> log_grad;
  bool is_constant = false;

  static InvariantDensity constant_one();
};

/// System generating the adjoint process with respect to m: same diffusion
/// fields, drift -X0 + sum_i (div X_i + X_i . grad log m) X_i. Rejects m
/// that is not strictly positive at sampled points.
VectorFieldSystem adjoint_system(const VectorFieldSystem& sys,
                                 const InvariantDensity& m = InvariantDensity::constant_one());

/// Iterated-bracket words up to max_level keyed as "[1,2]", "[[1,2],1]", ...
struct BracketTable {
  std::map<std::string, VectorField> entries;
  int max_level = 1;
};
BracketTable build_bracket_table(const VectorFieldSystem& sys, int max_level);

/// Deterministic sample points in a bounded chart region of the model.
std::vector<Vec> sample_points(const ModelSpace& space, int n, std::uint64_t seed);

// SU(2) chart helpers (unit quaternions as Vec4 (w, v1, v2, v3)).
Eigen::Vector4d su2_exp_quat(const Vec3& u);
Vec3 su2_log_quat(const Eigen::Vector4d& q);
Eigen::Vector4d quat_mul(const Eigen::Vector4d& a, const Eigen::Vector4d& b);
Eigen::Vector4d quat_conj(const Eigen::Vector4d& q);

}  // namespace hypobridge
