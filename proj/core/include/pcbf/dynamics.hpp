#pragma once

#include "pcbf/util.hpp"

#include <functional>
#include <string>
#include <utility>

namespace pcbf {

/// Jacobians of the nominal map z+ = f(z, v, 0).
struct Jacobians {
  Mat a;  // n x n
  Mat b;  // n x m
};

/// Discrete-time system x+ = f(x, u, w). Disturbances enter additively on the
/// state; which coordinates actually carry disturbance is encoded in the
/// scenario's DisturbanceBox (zero-width components stay zero).
///
/// Value type: copyable, immutable after construction, safe to share across
/// simulation workers.
struct SystemModel {
  int n_x = 0;
  int n_u = 0;
  bool is_linear = false;
  Mat a;  // valid when is_linear
  Mat b;  // valid when is_linear
  std::string name;

  std::function<Vec(const Vec&, const Vec&, const Vec&)> step_fn;
  std::function<Jacobians(const Vec&, const Vec&)> jac_fn;  // empty for linear models

  /// True map x+ = f(x, u, w).
  Vec step(const Vec& x, const Vec& u, const Vec& w) const;
  /// Nominal map z+ = f(z, v, 0).
  Vec step_nominal(const Vec& z, const Vec& v) const;
  /// (A, B) of the nominal map at (z, v).
  Jacobians jacobians(const Vec& z, const Vec& v) const;
};

/// Componentwise disturbance bounds; must contain the origin and be finite.
struct DisturbanceBox {
  Vec lower;
  Vec upper;

  DisturbanceBox() = default;
  DisturbanceBox(Vec lo, Vec hi);

  int dim() const { return static_cast<int>(lower.size()); }
  bool is_zero() const;
  /// Indices with nonzero width.
  std::vector<int> active_dims() const;

  static DisturbanceBox zero(int n) {
    return DisturbanceBox(Vec::Zero(n), Vec::Zero(n));
  }
  static DisturbanceBox symmetric(const Vec& magnitude) {
    return DisturbanceBox(-magnitude, magnitude);
  }
};

Vec step_nominal(const SystemModel& model, const Vec& z, const Vec& v);
Vec step_true(const SystemModel& model, const Vec& x, const Vec& u, const Vec& w);
Jacobians linearize(const SystemModel& model, const Vec& z, const Vec& v);

/// Exact discrete-time linear model x+ = A x + B u + w.
SystemModel linear_model(Mat a, Mat b, std::string name = "linear");

/// Scalar toy system z+ = z + v.
SystemModel integrator_1d();

/// Clohessy-Wiltshire-Hill relative orbital dynamics, zero-order-hold
/// discretised. State [p_x p_y p_z v_x v_y v_z], input: thrust per unit mass.
SystemModel cwh_model(double n_orbit, double ts);

/// Kinematic bicycle with Euler discretisation. State [p_y psi v delta]
/// (lateral offset, heading, speed, steering angle), input [dsteer tau].
/// The steering row is delta+ = delta + dsteer with no ts factor: the input
/// bound is a per-step rate.
SystemModel bicycle_model(double wheelbase, double ts);

/// Same dynamics expressed in deviation coordinates around a fixed point
/// x_eq (u_eq = 0): xbar+ = f(xbar + x_eq, u, w) - x_eq. Used to put the lane
/// scenario in the origin-centred form the synthesis machinery expects.
SystemModel shifted_model(const SystemModel& model, const Vec& x_eq);

}  // namespace pcbf
