#pragma once

#include "pcbf/util.hpp"

#include <Eigen/Sparse>

#include <string>
#include <vector>

namespace pcbf::qcqp {

struct Triplet {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

/// Convex quadratic inequality 0.5*x_S' Q x_S + r' x_S + c <= 0 acting on the
/// variable subset `support` (Q PSD, dense on the subset).
struct QuadCon {
  std::vector<int> support;
  Mat q;
  Vec r;
  double c = 0.0;

  double eval(const Vec& x) const;
  Vec gradient_on_support(const Vec& x) const;  // Q x_S + r
};

/// minimise 0.5 x'Hx + g'x
/// s.t.     A_eq x = b_eq
///          C_in x <= d_in
///          quads[k](x) <= 0
///
/// H and the constraint matrices are given as triplet lists whose *structure*
/// is fixed once a Solver is built on the problem; the numeric values (and
/// g, b_eq, d_in, quad data) may be updated between solves, which is how the
/// per-step parameter changes and SQP re-linearisations are fed in without
/// re-doing symbolic analysis.
struct Problem {
  int n = 0;
  std::vector<Triplet> h;  // lower triangle (row >= col) of symmetric H
  Vec g;

  int n_eq = 0;
  std::vector<Triplet> a_eq;
  Vec b_eq;

  int n_in = 0;
  std::vector<Triplet> c_in;
  Vec d_in;

  std::vector<QuadCon> quads;
};

enum class Status { optimal, max_iterations, numerical_failure };

struct Result {
  Status status = Status::numerical_failure;
  Vec x;
  double objective = 0.0;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  std::string message;

  bool ok() const { return status == Status::optimal; }
};

struct Options {
  double tol_feas = 1e-8;
  double tol_gap = 1e-8;  // relative complementarity target
  int max_iter = 150;
  double reg = 1e-9;
};

/// Primal-dual interior-point method (Mehrotra predictor-corrector) on the
/// sparse KKT system, factorised with a symbolic analysis that is done once
/// and reused across iterations and across repeated solves.
class Solver {
 public:
  explicit Solver(Problem prob, Options opt = {});

  Problem& problem() { return prob_; }
  const Problem& problem() const { return prob_; }

  /// x0, when given, seeds the primal iterate (warmstart).
  Result solve(const Vec* x0 = nullptr);

 private:
  void build_structure();
  void assemble_values(const Vec& x, const Vec& s, const Vec& lam, double delta);
  void refresh_matrices();

  Problem prob_;
  Options opt_;

  int m_total_ = 0;  // linear + quadratic inequality count
  int kkt_dim_ = 0;

  Eigen::SparseMatrix<double> kkt_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> ldlt_;
  bool analyzed_ = false;

  // Scatter maps: slot index into kkt_.valuePtr() for every contribution.
  std::vector<int> h_slot_;
  std::vector<int> aeq_slot_;
  std::vector<int> cin_slot_;
  std::vector<std::vector<int>> quad_hess_slot_;  // per quad, lower triangle of Q
  std::vector<std::vector<int>> quad_grad_slot_;  // per quad, per support var
  std::vector<int> xdiag_slot_;
  std::vector<int> ydiag_slot_;
  std::vector<int> zdiag_slot_;

  // Product-form matrices rebuilt at the start of each solve.
  Eigen::SparseMatrix<double> h_sym_;
  Eigen::SparseMatrix<double> a_sp_;
  Eigen::SparseMatrix<double> c_sp_;
};

}  // namespace pcbf::qcqp
