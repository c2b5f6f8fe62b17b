#include "pcbf/controller.hpp"

#include "pcbf/errors.hpp"

#include <cmath>

namespace pcbf {

std::string to_string(ControllerMode mode) {
  switch (mode) {
    case ControllerMode::two_step: return "two_step";
    case ControllerMode::multiobjective: return "multiobjective";
    case ControllerMode::nominal: return "nominal";
  }
  return "unknown";
}

ControllerMode controller_mode_from_string(const std::string& s) {
  if (s == "two_step") return ControllerMode::two_step;
  if (s == "multiobjective" || s == "multi") return ControllerMode::multiobjective;
  if (s == "nominal") return ControllerMode::nominal;
  throw ConfigError("unknown controller mode '" + s + "'");
}

Controller::Controller(PcbfProblemSpec spec, ControllerMode mode, double c_alpha,
                       ObjectiveSpec objective)
    : bank_(std::move(spec), std::move(objective)), mode_(mode), c_alpha_(c_alpha) {
  if (c_alpha_ < 0.0 || c_alpha_ >= 1.0)
    throw UsageError("Controller: c_alpha must lie in [0, 1)");
  if (mode_ == ControllerMode::nominal && !bank_.spec().tube_degenerate)
    throw UsageError("Controller: nominal mode requires a degenerate tube");
}

double Controller::domain_bound() const {
  return bank_.spec().alpha_f * bank_.spec().cbf.gamma_f;
}

Vec Controller::apply_input(const Vec& x, const PcbfSolution& sol) const {
  const PcbfProblemSpec& spec = bank_.spec();
  const Vec err = x - sol.z.col(0);
  if (!spec.tube_degenerate) {
    if (!contains(spec.tube.e, err, 1e-6))
      throw InvariantError("controller: measured state left the tube around z*_0");
  } else if (err.cwiseAbs().maxCoeff() > 1e-6 * (1.0 + x.cwiseAbs().maxCoeff())) {
    throw InvariantError("controller: z*_0 != x in degenerate-tube mode");
  }
  const Vec u = sol.v.col(0) + spec.tube.k_e * err;
  const double u_scale = 1.0 + spec.u_poly.b.cwiseAbs().maxCoeff();
  if (spec.u_poly.residual(u).maxCoeff() > 1e-7 * u_scale)
    throw InvariantError("controller: applied input left the raw input set");
  return u;
}

void Controller::init_multiobjective(const Vec& x0) {
  if (mode_ != ControllerMode::multiobjective)
    throw UsageError("init_multiobjective: controller is not in multiobjective mode");
  PcbfSolution sol = bank_.solve_slack_min(x0);
  WarmstartState ws;
  ws.xi_warm = sol.xi;
  ws.xi_prev_opt = sol.xi;
  ws.z_warm = sol.z;
  ws.v_warm = sol.v;
  ws_ = std::move(ws);
  last_solution_ = std::move(sol);
  step_index_ = 0;
}

std::pair<Vec, StepDiagnostics> Controller::step_two_step(const Vec& x, const Vec& p) {
  const PcbfProblemSpec& spec = bank_.spec();
  StepDiagnostics diag;

  ProblemBank::TrajectoryGuess guess;
  const ProblemBank::TrajectoryGuess* guess_ptr = nullptr;
  if (ws_) {
    guess.z = ws_->z_warm;
    guess.v = ws_->v_warm;
    guess_ptr = &guess;
  }

  PcbfSolution sol5 = bank_.solve_slack_min(x, guess_ptr);
  diag.value = sol5.h_value;
  diag.bound = sol5.h_value;
  diag.out_of_domain = sol5.h_value > domain_bound() * (1.0 + 1e-9);
  diag.solve_ms = sol5.solve_ms;
  diag.iterations = sol5.iterations;

  PcbfSolution sol6 = bank_.solve_objective(x, sol5.xi, p, &sol5);
  diag.objective = sol6.objective;
  diag.solve_ms += sol6.solve_ms;
  diag.iterations += sol6.iterations;

  const Vec u = apply_input(x, sol6);

  WarmstartState ws = warmstart_shift(spec, sol6);
  const double raw = htilde(ws.xi_prev_opt, spec.alpha_f) - htilde(ws.xi_warm, spec.alpha_f);
  if (raw < -1e-9 * (1.0 + diag.value) && !diag.out_of_domain)
    throw InvariantError("two-step warmstart failed to decrease inside the domain");
  diag.decrease = std::max(0.0, raw);

  ws_ = std::move(ws);
  last_solution_ = std::move(sol6);
  ++step_index_;
  return {u, diag};
}

std::pair<Vec, StepDiagnostics> Controller::step_multiobjective(const Vec& x, const Vec& p) {
  if (!ws_) throw UsageError("step_multiobjective: call init_multiobjective first");
  const PcbfProblemSpec& spec = bank_.spec();
  StepDiagnostics diag;

  const double h_warm = htilde(ws_->xi_warm, spec.alpha_f);
  const double h_prev = htilde(ws_->xi_prev_opt, spec.alpha_f);
  const double raw_budget = h_prev - h_warm;
  diag.bound = h_warm + c_alpha_ * std::max(0.0, raw_budget);

  PcbfSolution sol = bank_.solve_multiobjective(x, *ws_, c_alpha_, p);
  diag.value = sol.h_value;
  diag.objective = sol.objective;
  diag.solve_ms = sol.solve_ms;
  diag.iterations = sol.iterations;
  diag.out_of_domain = sol.h_value > domain_bound() * (1.0 + 1e-9);

  const Vec u = apply_input(x, sol);

  WarmstartState ws = warmstart_shift(spec, sol);
  const double raw = htilde(ws.xi_prev_opt, spec.alpha_f) - htilde(ws.xi_warm, spec.alpha_f);
  if (raw < -1e-9 * (1.0 + diag.value) && !diag.out_of_domain)
    throw InvariantError("multiobjective warmstart failed to decrease inside the domain");
  diag.decrease = std::max(0.0, raw);

  ws_ = std::move(ws);
  last_solution_ = std::move(sol);
  ++step_index_;
  return {u, diag};
}

std::pair<Vec, StepDiagnostics> Controller::step(const Vec& x, const Vec& p) {
  switch (mode_) {
    case ControllerMode::multiobjective:
      if (!ws_) init_multiobjective(x);
      return step_multiobjective(x, p);
    case ControllerMode::two_step:
    case ControllerMode::nominal:
      return step_two_step(x, p);
  }
  throw UsageError("Controller::step: invalid mode");
}

const WarmstartState& Controller::warmstart() const {
  if (!ws_) throw UsageError("Controller: no warmstart state yet");
  return *ws_;
}

const PcbfSolution& Controller::last_solution() const {
  if (!last_solution_) throw UsageError("Controller: no solution yet");
  return *last_solution_;
}

}  // namespace pcbf
