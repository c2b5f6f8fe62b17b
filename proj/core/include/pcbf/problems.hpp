#pragma once

#include "pcbf/dynamics.hpp"
#include "pcbf/geometry.hpp"
#include "pcbf/synthesis.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace pcbf {

/// Primary objective evaluated by the barrier-constrained problems.
///  - fuel:               sum_i ||v_i||_1
///  - filter:             ||v_0 + K_e (x - z_0) - p||_1  (safety filter)
///  - quadratic_tracking: sum_i (z_i - z_ref)' Q (z_i - z_ref) + v_i' R v_i
struct ObjectiveSpec {
  enum class Kind { fuel, filter, quadratic_tracking };
  Kind kind = Kind::fuel;
  Mat q;      // tracking
  Mat r;      // tracking
  Vec z_ref;  // tracking

  static ObjectiveSpec fuel() { return {}; }
  static ObjectiveSpec filter() {
    ObjectiveSpec o;
    o.kind = Kind::filter;
    return o;
  }
  static ObjectiveSpec tracking(Mat q, Mat r, Vec z_ref);
};

/// Everything a barrier problem instance needs: model, horizon, sets, tube,
/// terminal certificate and padding. Tightened sets are precomputed here.
struct PcbfProblemSpec {
  SystemModel model;
  int horizon = 0;  // N
  Polytope x_poly;  // raw X
  Polytope u_poly;  // raw U
  RpiTube tube;
  TerminalCbf cbf;
  PaddingSchedule pad;
  double alpha_f = 1e6;

  // Derived at construction.
  Polytope u_tight;                // U minus kappa(E)
  std::vector<Polytope> x_tight;   // Xbar_i(0) minus E, i = 0..N-1
  Vec e_support;                   // support of E per X row
  Mat s_inv;                       // tube shape inverse (non-degenerate only)
  bool tube_degenerate = true;

  int n_x() const { return model.n_x; }
  int n_u() const { return model.n_u; }
  int n_rows() const { return x_poly.rows(); }

  /// E-tightened constraint function cbar(z) = A_x z - (b_x - support) (no
  /// stage padding); the warmstart slack row i = N-1 uses this.
  Vec cbar(const Vec& z) const;
};

/// Validates the coupling invariants (Assumption 4, nonempty tightened input
/// set, schedule length) and precomputes the tightened sets.
PcbfProblemSpec make_problem_spec(SystemModel model, int horizon, Polytope x_poly,
                                  Polytope u_poly, RpiTube tube, TerminalCbf cbf,
                                  PaddingSchedule pad, double alpha_f);

/// Stage slacks xi_0..xi_{N-1} (columns) and the terminal slack xi_N.
struct SlackSequence {
  Mat stage;             // r_x x N
  double terminal = 0.0;

  static SlackSequence zeros(int rows, int n) {
    return SlackSequence{Mat::Zero(rows, n), 0.0};
  }
};

/// h~(xi) = alpha_f xi_N + sum_i ||xi_i||_1.
double htilde(const SlackSequence& xi, double alpha_f);

struct PcbfSolution {
  Mat z;   // n x (N+1)
  Mat v;   // m x N
  SlackSequence xi;
  double objective = 0.0;
  double h_value = 0.0;
  int iterations = 0;
  double solve_ms = 0.0;
};

/// Shifted candidate at the next step: xi_warm is the warmstart slack
/// sequence, xi_prev_opt the slacks the shift was built from.
struct WarmstartState {
  SlackSequence xi_warm;
  SlackSequence xi_prev_opt;
  Mat z_warm;  // n x (N+1)
  Mat v_warm;  // m x N
};

/// (h_f(z), pi_f(z)).
std::pair<double, Vec> eval_terminal(const TerminalCbf& cbf, const Vec& z);

/// Shifts a feasible solution one step: drop the first input, append the
/// terminal policy, and rebuild the slacks rowwise. The appended input is
/// clamped into the tightened input set so the warmstart stays feasible even
/// for states outside D_f (no clamping occurs inside, where the terminal
/// policy is admissible by design of gamma_f).
WarmstartState warmstart_shift(const PcbfProblemSpec& spec, const PcbfSolution& sol);

/// Delta h~ = h~(xi_prev) - h~(xi_warm). A value below -1e-9 (scaled) means
/// the warmstart failed to decrease, which breaks the contract.
double decrease(const SlackSequence& xi_prev, const SlackSequence& xi_warm, double alpha_f);

class ProblemBank;

/// Slack minimisation (value function h). Always feasible by construction.
PcbfSolution solve_slack_min(const PcbfProblemSpec& spec, const Vec& x);

/// Objective optimisation with slacks frozen to xi_fixed.
PcbfSolution solve_objective(const PcbfProblemSpec& spec, const Vec& x,
                             const SlackSequence& xi_fixed, const ObjectiveSpec& objective,
                             const Vec& p = Vec());

/// Single multiobjective problem with the barrier-decrease budget constraint.
PcbfSolution solve_multiobjective(const PcbfProblemSpec& spec, const Vec& x,
                                  const WarmstartState& ws, double c_alpha,
                                  const ObjectiveSpec& objective, const Vec& p = Vec());

/// Stateful variant that caches solver structure across repeated solves (the
/// controller path). The free functions above build a fresh bank per call.
class ProblemBank {
 public:
  ProblemBank(PcbfProblemSpec spec, ObjectiveSpec objective);
  ~ProblemBank();
  ProblemBank(ProblemBank&&) noexcept;
  ProblemBank& operator=(ProblemBank&&) noexcept;

  const PcbfProblemSpec& spec() const;

  struct TrajectoryGuess {
    Mat z;  // n x (N+1)
    Mat v;  // m x N
  };

  PcbfSolution solve_slack_min(const Vec& x, const TrajectoryGuess* guess = nullptr);
  PcbfSolution solve_objective(const Vec& x, const SlackSequence& xi_fixed, const Vec& p,
                               const PcbfSolution* guess = nullptr);
  PcbfSolution solve_multiobjective(const Vec& x, const WarmstartState& ws, double c_alpha,
                                    const Vec& p);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace pcbf
