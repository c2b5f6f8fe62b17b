#pragma once

#include "pcbf/util.hpp"

#include <string>
#include <utility>
#include <vector>

namespace pcbf::sdp {

/// Affine matrix pencil F(x) = F0 + sum_i x_i * Fi, constrained to be PSD.
/// Coefficients are stored sparsely per variable index; all matrices must be
/// symmetric and share the block dimension.
struct LmiBlock {
  Mat f0;
  std::vector<std::pair<int, Mat>> coeffs;

  int dim() const { return static_cast<int>(f0.rows()); }
  Mat eval(const Vec& x) const;
};

enum class Status { optimal, infeasible, error };

struct Result {
  Status status = Status::error;
  Vec x;
  /// c'x, minus logdet of the maxdet block when one is set.
  double objective = 0.0;
  /// Smallest eigenvalue over all blocks at the returned point (>= 0 means
  /// feasible to solver precision).
  double min_block_eig = 0.0;
  /// Index of the most violated block when infeasible.
  int worst_block = -1;
  std::string message;
};

struct Options {
  double gap_tol = 1e-9;
  double newton_tol = 1e-9;
  double t_init = 1.0;
  double t_mult = 10.0;
  int max_newton_per_stage = 200;
  int max_stages = 40;
};

/// Small dense semidefinite programs:
///
///   minimise  c'x            subject to  F_k(x) >= 0
///   minimise  c'x - logdet(F_m(x))  (maxdet form, set_logdet_block)
///
/// solved by a two-phase logarithmic-barrier path-following method with
/// damped Newton steps. Intended for the offline synthesis problems, whose
/// dimensions stay in the tens of variables; not a general-purpose solver.
class Problem {
 public:
  explicit Problem(int nvars);

  int nvars() const { return nvars_; }
  int add_block(LmiBlock blk);
  void set_cost(Vec c);
  /// Marks a block whose logdet is maximised along with minimising c'x.
  void set_logdet_block(int block_index);

  /// x0 (optional) is a hint; a phase-I search makes it strictly feasible.
  Result solve(const Options& opt = {}, const Vec* x0 = nullptr) const;

 private:
  int nvars_;
  Vec cost_;
  std::vector<LmiBlock> blocks_;
  int logdet_block_ = -1;
};

}  // namespace pcbf::sdp
