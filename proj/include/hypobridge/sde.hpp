#pragma once

#include <functional>

#include "hypobridge/models.hpp"
#include "hypobridge/types.hpp"

namespace hypobridge {

/// Additional drift evaluated at (t, y); returns false when unavailable
/// (kernel floor), in which case the step is aborted by the caller.
using ExtraDrift = std::function<bool(double, const VecRef&, Vec&)>;

/// One Stratonovich Heun (predictor-corrector) step of
///   dy = sum_i X_i(y) o dw^i + X0(y) dt (+ extra drift dt).
/// Torus states are wrapped, SU(2) states retracted through the exponential
/// chart. Reusable across paths; not thread-safe per instance.
class HeunStepper {
 public:
  explicit HeunStepper(const VectorFieldSystem& sys)
      : sys_(&sys),
        dim_(sys.dim()),
        field_(sys.dim()),
        drift_y_(sys.dim()),
        drift_p_(sys.dim()),
        incr_y_(sys.dim()),
        incr_p_(sys.dim()),
        pred_(sys.dim()) {}

  /// Advances `state` in place. `dw` holds the m Brownian increments for the
  /// step. Returns false if the extra drift was unavailable at either stage
  /// (state left unchanged).
  bool step(Vec& state, double t, double dt, const VecRef& dw, const ExtraDrift& extra = nullptr) {
    if (!stage_drift(t, state, drift_y_, extra)) return false;
    incr_y_.setZero();
    for (int i = 0; i < sys_->diffusion_count(); ++i) {
      sys_->diffusion[i].eval_into(state, field_);
      incr_y_ += dw[i] * field_;
    }
    pred_ = state + incr_y_ + dt * drift_y_;
    pred_ = sys_->space.wrap(pred_);

    if (!stage_drift(t + dt, pred_, drift_p_, extra)) return false;
    incr_p_.setZero();
    for (int i = 0; i < sys_->diffusion_count(); ++i) {
      sys_->diffusion[i].eval_into(pred_, field_);
      incr_p_ += dw[i] * field_;
    }
    state += 0.5 * (incr_y_ + incr_p_) + 0.5 * dt * (drift_y_ + drift_p_);
    state = sys_->space.wrap(state);
    return true;
  }

 private:
  bool stage_drift(double t, const VecRef& y, Vec& out, const ExtraDrift& extra) {
    sys_->drift.eval_into(y, out);
    if (extra) {
      if (!extra(t, y, field_)) return false;
      out += field_;
    }
    return true;
  }

  const VectorFieldSystem* sys_;
  int dim_;
  Vec field_, drift_y_, drift_p_, incr_y_, incr_p_, pred_;
};

}  // namespace hypobridge
