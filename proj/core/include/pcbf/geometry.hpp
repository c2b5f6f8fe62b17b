#pragma once

#include "pcbf/util.hpp"

#include <vector>

namespace pcbf {

/// Polytope in row form {x | a_i^T x <= b_i}. The constraint function is
/// c(x) = A x - b, so membership is c(x) <= 0.
struct Polytope {
  Mat a_rows;  // r x n
  Vec b;       // r

  Polytope() = default;
  Polytope(Mat a, Vec b_in);

  int rows() const { return static_cast<int>(a_rows.rows()); }
  int dim() const { return static_cast<int>(a_rows.cols()); }

  /// c(x) = A x - b.
  Vec residual(const Vec& x) const;
  bool contains(const Vec& x, double tol = 0.0) const;

  /// Axis-aligned box lo <= x <= hi as 2n rows (upper bounds first).
  static Polytope box(const Vec& lo, const Vec& hi);
};

/// Origin-centred ellipsoid {e | e^T S^{-1} e <= 1} described by its shape
/// matrix S (symmetric PSD). S == 0 encodes the degenerate set {0}.
struct Ellipsoid {
  Mat shape;  // n x n

  Ellipsoid() = default;
  explicit Ellipsoid(Mat s);

  int dim() const { return static_cast<int>(shape.rows()); }
  bool degenerate() const;

  static Ellipsoid zero(int n) { return Ellipsoid(Mat::Zero(n, n)); }
};

/// Support function max{a^T e | e in E} = sqrt(a^T S a).
double support_on_ellipsoid(const Vec& a, const Ellipsoid& e);

/// Rowwise tightening b_i' = b_i - pad - sqrt(a_i^T S a_i). Emptiness is not
/// an error (slack variables absorb it); *severely_empty (optional) flags
/// b' < -max(1,|b|)*1e6, which indicates a broken design rather than a tight
/// one.
Polytope tighten(const Polytope& p, const Ellipsoid& e, double pad,
                 bool* severely_empty = nullptr);

/// Image K*E of an ellipsoid under a linear map: shape' = K S K^T.
Ellipsoid map_ellipsoid(const Mat& k, const Ellipsoid& e);

/// Membership e in E up to tol: e^T S^{-1} e <= 1 + tol. Singular shapes are
/// handled through an eigendecomposition with an explicit range check; the
/// degenerate ellipsoid contains only (numerically) zero vectors.
bool contains(const Ellipsoid& e, const Vec& pt, double tol);

/// Stage padding Delta_0..Delta_{N-1} with Delta_0 = 0 and strictly
/// increasing entries.
struct PaddingSchedule {
  std::vector<double> deltas;

  PaddingSchedule() = default;
  explicit PaddingSchedule(std::vector<double> d);

  int horizon() const { return static_cast<int>(deltas.size()); }
  double at(int i) const { return deltas.at(static_cast<size_t>(i)); }

  /// Delta_i = i * delta_bar.
  static PaddingSchedule linear(int n, double delta_bar);
};

}  // namespace pcbf
