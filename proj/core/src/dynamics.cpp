#include "pcbf/dynamics.hpp"

#include "pcbf/errors.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>

namespace pcbf {

namespace {

void check_dims(const SystemModel& m, const Vec& x, const Vec& u, const char* who) {
  if (x.size() != m.n_x || u.size() != m.n_u)
    throw UsageError(std::string(who) + ": dimension mismatch for model " + m.name);
}

void check_finite(const Vec& v, const char* who) {
  if (!v.allFinite()) throw UsageError(std::string(who) + ": non-finite result");
}

}  // namespace

Vec SystemModel::step(const Vec& x, const Vec& u, const Vec& w) const {
  check_dims(*this, x, u, "SystemModel::step");
  if (w.size() != n_x) throw UsageError("SystemModel::step: disturbance dimension mismatch");
  Vec out = step_fn(x, u, w);
  check_finite(out, "SystemModel::step");
  return out;
}

Vec SystemModel::step_nominal(const Vec& z, const Vec& v) const {
  check_dims(*this, z, v, "SystemModel::step_nominal");
  Vec out = step_fn(z, v, Vec::Zero(n_x));
  check_finite(out, "SystemModel::step_nominal");
  return out;
}

Jacobians SystemModel::jacobians(const Vec& z, const Vec& v) const {
  check_dims(*this, z, v, "SystemModel::jacobians");
  if (is_linear) return {a, b};
  return jac_fn(z, v);
}

DisturbanceBox::DisturbanceBox(Vec lo, Vec hi) : lower(std::move(lo)), upper(std::move(hi)) {
  if (lower.size() != upper.size()) throw UsageError("DisturbanceBox: size mismatch");
  if (!lower.allFinite() || !upper.allFinite())
    throw UsageError("DisturbanceBox: bounds must be finite");
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (lower[i] > 0.0 || upper[i] < 0.0)
      throw UsageError("DisturbanceBox: must contain the origin componentwise");
  }
}

bool DisturbanceBox::is_zero() const {
  return lower.size() == 0 ||
         (lower.cwiseAbs().maxCoeff() == 0.0 && upper.cwiseAbs().maxCoeff() == 0.0);
}

std::vector<int> DisturbanceBox::active_dims() const {
  std::vector<int> out;
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (upper[i] - lower[i] > 0.0) out.push_back(static_cast<int>(i));
  }
  return out;
}

Vec step_nominal(const SystemModel& model, const Vec& z, const Vec& v) {
  return model.step_nominal(z, v);
}

Vec step_true(const SystemModel& model, const Vec& x, const Vec& u, const Vec& w) {
  return model.step(x, u, w);
}

Jacobians linearize(const SystemModel& model, const Vec& z, const Vec& v) {
  return model.jacobians(z, v);
}

SystemModel linear_model(Mat a, Mat b, std::string name) {
  if (a.rows() != a.cols()) throw UsageError("linear_model: A must be square");
  if (b.rows() != a.rows()) throw UsageError("linear_model: B row count mismatch");
  SystemModel m;
  m.n_x = static_cast<int>(a.rows());
  m.n_u = static_cast<int>(b.cols());
  m.is_linear = true;
  m.a = std::move(a);
  m.b = std::move(b);
  m.name = std::move(name);
  const Mat& ar = m.a;
  const Mat& br = m.b;
  m.step_fn = [ar, br](const Vec& x, const Vec& u, const Vec& w) -> Vec {
    return ar * x + br * u + w;
  };
  return m;
}

SystemModel integrator_1d() {
  return linear_model(Mat::Ones(1, 1), Mat::Ones(1, 1), "toy1d");
}

SystemModel cwh_model(double n_orbit, double ts) {
  if (n_orbit <= 0.0) throw UsageError("cwh_model: n_orbit must be > 0");
  if (ts <= 0.0) throw UsageError("cwh_model: ts must be > 0");

  const double n = n_orbit;
  Mat ac = Mat::Zero(6, 6);
  ac.block(0, 3, 3, 3) = Mat::Identity(3, 3);
  ac(3, 0) = 3.0 * n * n;
  ac(3, 4) = 2.0 * n;
  ac(4, 3) = -2.0 * n;
  ac(5, 2) = -n * n;
  Mat bc = Mat::Zero(6, 3);
  bc.block(3, 0, 3, 3) = Mat::Identity(3, 3);

  // Zero-order hold through the augmented exponential
  // expm([[Ac, Bc], [0, 0]] ts) = [[A, B], [0, I]].
  Mat aug = Mat::Zero(9, 9);
  aug.block(0, 0, 6, 6) = ac * ts;
  aug.block(0, 6, 6, 3) = bc * ts;
  const Mat exp_aug = aug.exp();

  return linear_model(exp_aug.block(0, 0, 6, 6), exp_aug.block(0, 6, 6, 3), "cwh");
}

SystemModel bicycle_model(double wheelbase, double ts) {
  if (wheelbase <= 0.0) throw UsageError("bicycle_model: wheelbase must be > 0");
  if (ts <= 0.0) throw UsageError("bicycle_model: ts must be > 0");

  SystemModel m;
  m.n_x = 4;
  m.n_u = 2;
  m.is_linear = false;
  m.name = "bicycle";
  const double l = wheelbase;
  m.step_fn = [l, ts](const Vec& x, const Vec& u, const Vec& w) -> Vec {
    const double py = x[0], psi = x[1], v = x[2], delta = x[3];
    const double dsteer = u[0], tau = u[1];
    Vec out(4);
    out[0] = py + ts * v * std::sin(psi);
    out[1] = psi + ts * (v / l) * std::tan(delta);
    out[2] = v + ts * tau;
    out[3] = delta + dsteer;
    return out + w;
  };
  m.jac_fn = [l, ts](const Vec& x, const Vec&) -> Jacobians {
    const double psi = x[1], v = x[2], delta = x[3];
    const double sec = 1.0 / std::cos(delta);
    Mat a = Mat::Identity(4, 4);
    a(0, 1) = ts * v * std::cos(psi);
    a(0, 2) = ts * std::sin(psi);
    a(1, 2) = ts * std::tan(delta) / l;
    a(1, 3) = ts * (v / l) * sec * sec;
    Mat b = Mat::Zero(4, 2);
    b(2, 1) = ts;
    b(3, 0) = 1.0;
    return {a, b};
  };
  return m;
}

SystemModel shifted_model(const SystemModel& model, const Vec& x_eq) {
  if (x_eq.size() != model.n_x) throw UsageError("shifted_model: x_eq dimension mismatch");
  // The shift must actually be an equilibrium, otherwise the origin of the
  // deviation coordinates is not a fixed point of the nominal map.
  const Vec drift = model.step_nominal(x_eq, Vec::Zero(model.n_u)) - x_eq;
  if (drift.cwiseAbs().maxCoeff() > 1e-9 * (1.0 + x_eq.cwiseAbs().maxCoeff()))
    throw UsageError("shifted_model: x_eq is not an equilibrium of " + model.name);

  SystemModel m;
  m.n_x = model.n_x;
  m.n_u = model.n_u;
  m.is_linear = model.is_linear;
  m.name = model.name + "_shifted";
  if (model.is_linear) {
    m.a = model.a;
    m.b = model.b;
  }
  const SystemModel base = model;
  const Vec eq = x_eq;
  m.step_fn = [base, eq](const Vec& x, const Vec& u, const Vec& w) -> Vec {
    return base.step_fn(x + eq, u, w) - eq;
  };
  if (model.jac_fn) {
    m.jac_fn = [base, eq](const Vec& z, const Vec& v) -> Jacobians {
      return base.jac_fn(z + eq, v);
    };
  }
  return m;
}

}  // namespace pcbf
