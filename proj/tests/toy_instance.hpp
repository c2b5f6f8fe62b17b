#pragma once

// The pinned 1-D instance used across the solver tests: scalar integrator
// z+ = z + v, X = U = [-1, 1], tube radius 0.1 with K_e = -1 (so the
// tightened input set is [-0.9, 0.9]), terminal set S_f = [-0.5, 0.5] via
// P = 4 with K_f = -1, N = 2, padding (0, 1e-3), alpha_f = 1e6.

#include "pcbf/problems.hpp"

namespace toy {

inline pcbf::PcbfProblemSpec spec() {
  using namespace pcbf;
  SystemModel model = integrator_1d();
  Polytope x_poly = Polytope::box(Vec::Constant(1, -1.0), Vec::Constant(1, 1.0));
  Polytope u_poly = Polytope::box(Vec::Constant(1, -1.0), Vec::Constant(1, 1.0));
  RpiTube tube;
  tube.e = Ellipsoid{(Mat(1, 1) << 0.01).finished()};
  tube.k_e = Mat::Constant(1, 1, -1.0);
  tube.contraction = 0.0;
  TerminalCbf cbf;
  cbf.p = Mat::Constant(1, 1, 4.0);
  cbf.k_f = Mat::Constant(1, 1, -1.0);
  cbf.rho = 0.0;
  // Binding row: tightened state bound 0.899 gives 0.899^2 * 4 - 1.
  cbf.gamma_f = 0.899 * 0.899 * 4.0 - 1.0;
  return make_problem_spec(std::move(model), 2, std::move(x_poly), std::move(u_poly),
                           std::move(tube), std::move(cbf),
                           PaddingSchedule::linear(2, 1e-3), 1e6);
}

constexpr double kTube = 0.1;
constexpr double kInput = 0.9;     // tightened input bound
constexpr double kB0 = 0.9;        // stage-0 tightened state bound
constexpr double kB1 = 0.899;      // stage-1 tightened state bound
constexpr double kAlphaF = 1e6;
constexpr double kSfRadius = 0.5;

}  // namespace toy
