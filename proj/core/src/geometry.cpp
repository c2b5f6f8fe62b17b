#include "pcbf/geometry.hpp"

#include "pcbf/errors.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace pcbf {

Polytope::Polytope(Mat a, Vec b_in) : a_rows(std::move(a)), b(std::move(b_in)) {
  if (a_rows.rows() < 1) throw UsageError("Polytope: needs at least one row");
  if (a_rows.rows() != b.size()) throw UsageError("Polytope: row count mismatch");
  for (Eigen::Index i = 0; i < a_rows.rows(); ++i) {
    if (a_rows.row(i).norm() <= 0.0)
      throw UsageError("Polytope: zero row " + std::to_string(i));
  }
}

Vec Polytope::residual(const Vec& x) const {
  if (x.size() != a_rows.cols()) throw UsageError("Polytope::residual: dimension mismatch");
  return a_rows * x - b;
}

bool Polytope::contains(const Vec& x, double tol) const {
  return (residual(x).array() <= tol).all();
}

Polytope Polytope::box(const Vec& lo, const Vec& hi) {
  if (lo.size() != hi.size()) throw UsageError("Polytope::box: bound size mismatch");
  const Eigen::Index n = lo.size();
  Mat a = Mat::Zero(2 * n, n);
  Vec b(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (lo[i] > hi[i]) throw UsageError("Polytope::box: lo > hi");
    a(i, i) = 1.0;
    b[i] = hi[i];
    a(n + i, i) = -1.0;
    b[n + i] = -lo[i];
  }
  return Polytope(std::move(a), std::move(b));
}

Ellipsoid::Ellipsoid(Mat s) : shape(std::move(s)) {
  if (shape.rows() != shape.cols()) throw UsageError("Ellipsoid: shape not square");
  const double scale = std::max(1.0, shape.cwiseAbs().maxCoeff());
  if ((shape - shape.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw UsageError("Ellipsoid: shape not symmetric");
  shape = 0.5 * (shape + shape.transpose());
}

bool Ellipsoid::degenerate() const {
  return shape.size() == 0 || shape.cwiseAbs().maxCoeff() == 0.0;
}

double support_on_ellipsoid(const Vec& a, const Ellipsoid& e) {
  if (e.degenerate()) return 0.0;
  if (a.size() != e.shape.rows()) throw UsageError("support_on_ellipsoid: dimension mismatch");
  const double q = a.dot(e.shape * a);
  return q > 0.0 ? std::sqrt(q) : 0.0;
}

Polytope tighten(const Polytope& p, const Ellipsoid& e, double pad,
                 bool* severely_empty) {
  if (pad < 0.0) throw UsageError("tighten: pad must be >= 0");
  Polytope out = p;
  for (int i = 0; i < p.rows(); ++i) {
    out.b[i] = p.b[i] - pad - support_on_ellipsoid(p.a_rows.row(i).transpose(), e);
  }
  if (severely_empty != nullptr) {
    const double b_scale = std::max(1.0, p.b.cwiseAbs().maxCoeff());
    *severely_empty = (out.b.array() < -b_scale * 1e6).any();
  }
  return out;
}

Ellipsoid map_ellipsoid(const Mat& k, const Ellipsoid& e) {
  if (k.cols() != e.shape.rows()) throw UsageError("map_ellipsoid: dimension mismatch");
  return Ellipsoid(k * e.shape * k.transpose());
}

bool contains(const Ellipsoid& e, const Vec& pt, double tol) {
  if (pt.size() != e.shape.rows()) throw UsageError("contains: dimension mismatch");
  const double pt_scale = 1.0 + pt.cwiseAbs().maxCoeff();
  if (e.degenerate()) return pt.cwiseAbs().maxCoeff() <= tol * pt_scale;

  Eigen::SelfAdjointEigenSolver<Mat> eig(e.shape);
  const Vec evals = eig.eigenvalues();
  // Relative rank cut: tiny-but-genuine semi-axes (ill-conditioned tubes)
  // must stay on the quadratic path; only numerically-zero directions are
  // treated as flat.
  const double rank_tol = 1e-13 * evals.cwiseAbs().maxCoeff();
  const Vec coords = eig.eigenvectors().transpose() * pt;

  double quad = 0.0;
  for (Eigen::Index i = 0; i < evals.size(); ++i) {
    if (evals[i] <= rank_tol) {
      // Direction outside the range of S: the point must have no component
      // there, otherwise it cannot belong to the (flat) ellipsoid.
      if (std::abs(coords[i]) > tol * pt_scale + 1e-12) return false;
    } else {
      quad += coords[i] * coords[i] / evals[i];
    }
  }
  return quad <= 1.0 + tol;
}

PaddingSchedule::PaddingSchedule(std::vector<double> d) : deltas(std::move(d)) {
  if (deltas.empty()) throw UsageError("PaddingSchedule: empty");
  if (deltas.front() != 0.0) throw UsageError("PaddingSchedule: Delta_0 must be 0");
  for (size_t i = 0; i + 1 < deltas.size(); ++i) {
    if (!(deltas[i + 1] > deltas[i]))
      throw UsageError("PaddingSchedule: must be strictly increasing at index " +
                       std::to_string(i + 1));
  }
}

PaddingSchedule PaddingSchedule::linear(int n, double delta_bar) {
  if (n < 1) throw UsageError("PaddingSchedule::linear: n must be >= 1");
  if (n > 1 && delta_bar <= 0.0)
    throw UsageError("PaddingSchedule::linear: delta_bar must be > 0");
  std::vector<double> d(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) d[static_cast<size_t>(i)] = i * delta_bar;
  return PaddingSchedule(std::move(d));
}

}  // namespace pcbf
