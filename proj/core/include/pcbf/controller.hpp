#pragma once

#include "pcbf/problems.hpp"

#include <optional>
#include <string>

namespace pcbf {

enum class ControllerMode { two_step, multiobjective, nominal };

std::string to_string(ControllerMode mode);
ControllerMode controller_mode_from_string(const std::string& s);

/// Per-step observability record: the theorem inequalities are checked from
/// these by the simulator and test suites.
struct StepDiagnostics {
  double value = 0.0;      // h(x_k) for two-step/nominal, h~(xi*_k) for multi
  double bound = 0.0;      // decrease-budget bound (multi); h(x_k) otherwise
  double decrease = 0.0;   // Delta h~ produced by shifting the applied solution
  double objective = 0.0;  // primary objective J*
  double solve_ms = 0.0;
  int iterations = 0;
  bool out_of_domain = false;  // h(x) > alpha_f * gamma_f
};

/// Stateful online controller. One instance is strictly sequential (the
/// warmstart pair is a serial dependency); distinct instances share nothing.
class Controller {
 public:
  Controller(PcbfProblemSpec spec, ControllerMode mode, double c_alpha,
             ObjectiveSpec objective);

  ControllerMode mode() const { return mode_; }
  const PcbfProblemSpec& spec() const { return bank_.spec(); }

  /// Algorithm 2 lines 1-3: solve the slack minimisation once, seed the
  /// warmstart pair with its slacks (so Delta h~ = 0 at k = 0). Idempotent
  /// for a fixed x0. Two-step/nominal modes need no initialisation.
  void init_multiobjective(const Vec& x0);

  /// Algorithm 1: slack minimisation, then objective optimisation with the
  /// slacks frozen; applies u = v*_0 + K_e (x - z*_0).
  std::pair<Vec, StepDiagnostics> step_two_step(const Vec& x, const Vec& p = Vec());

  /// Algorithm 2 body: one multiobjective solve, apply the input, shift the
  /// warmstart.
  std::pair<Vec, StepDiagnostics> step_multiobjective(const Vec& x, const Vec& p = Vec());

  /// Dispatch on the configured mode.
  std::pair<Vec, StepDiagnostics> step(const Vec& x, const Vec& p = Vec());

  bool initialised() const { return ws_.has_value(); }
  const WarmstartState& warmstart() const;
  const PcbfSolution& last_solution() const;
  int step_index() const { return step_index_; }

 private:
  Vec apply_input(const Vec& x, const PcbfSolution& sol) const;
  double domain_bound() const;

  ProblemBank bank_;
  ControllerMode mode_;
  double c_alpha_;
  std::optional<WarmstartState> ws_;
  std::optional<PcbfSolution> last_solution_;
  int step_index_ = 0;
};

}  // namespace pcbf
