#include "pcbf/problems.hpp"

#include "pcbf/errors.hpp"
#include "toy_oracle.hpp"

#include <doctest.h>

#include <cmath>

using namespace pcbf;

namespace {

PcbfSolution toy_solution_at_2() {
  // The optimal slack-min point at x = 2.0, written out by hand:
  // z = (1.9, 1.0, 0.1), v = (-0.9, -0.9), slacks (1.0, 0.101, 0).
  PcbfSolution sol;
  sol.z = Mat(1, 3);
  sol.z << 1.9, 1.0, 0.1;
  sol.v = Mat(1, 2);
  sol.v << -0.9, -0.9;
  sol.xi = SlackSequence::zeros(2, 2);
  sol.xi.stage(0, 0) = 1.0;
  sol.xi.stage(0, 1) = 0.101;
  sol.xi.terminal = 0.0;
  sol.h_value = 1.101;
  return sol;
}

}  // namespace

TEST_CASE("htilde values") {
  CHECK(htilde(SlackSequence::zeros(2, 2), 1e6) == 0.0);
  auto xi = SlackSequence::zeros(2, 2);
  xi.stage(0, 0) = 1.0;
  xi.stage(0, 1) = 0.101;
  CHECK(htilde(xi, 1e6) == doctest::Approx(1.101).epsilon(1e-12));
  auto term_only = SlackSequence::zeros(2, 2);
  term_only.terminal = 1.0;
  CHECK(htilde(term_only, 1e6) == doctest::Approx(1e6));
}

TEST_CASE("eval_terminal") {
  TerminalCbf cbf;
  cbf.p = Mat::Constant(1, 1, 4.0);
  cbf.k_f = Mat::Constant(1, 1, -1.0);
  auto [h0, v0] = eval_terminal(cbf, Vec::Zero(1));
  CHECK(h0 == doctest::Approx(-1.0));
  CHECK(v0[0] == 0.0);
  auto [hb, vb] = eval_terminal(cbf, Vec::Constant(1, 0.5));
  CHECK(hb == doctest::Approx(0.0));
  (void)vb;
  auto [ht, vt] = eval_terminal(cbf, Vec::Constant(1, 0.1));
  CHECK(ht == doctest::Approx(-0.96));
  CHECK(vt[0] == doctest::Approx(-0.1));
}

TEST_CASE("warmstart_shift reproduces the hand-evaluated rows") {
  const auto spec = toy::spec();
  const auto sol = toy_solution_at_2();
  const auto ws = warmstart_shift(spec, sol);

  CHECK(ws.xi_warm.stage(0, 0) == doctest::Approx(0.100).epsilon(1e-12));
  CHECK(ws.xi_warm.stage(1, 0) == 0.0);
  CHECK(ws.xi_warm.stage.col(1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(ws.xi_warm.terminal == 0.0);

  CHECK(ws.z_warm(0, 0) == doctest::Approx(1.0));
  CHECK(ws.z_warm(0, 1) == doctest::Approx(0.1));
  CHECK(ws.z_warm(0, 2) == doctest::Approx(0.0));
  CHECK(ws.v_warm(0, 0) == doctest::Approx(-0.9));
  CHECK(ws.v_warm(0, 1) == doctest::Approx(-0.1));

  CHECK(decrease(sol.xi, ws.xi_warm, spec.alpha_f) == doctest::Approx(1.001).epsilon(1e-12));
}

TEST_CASE("warmstart of an all-zero-slack terminal state stays zero") {
  const auto spec = toy::spec();
  PcbfSolution sol;
  sol.z = Mat(1, 3);
  sol.z << 0.3, 0.1, 0.05;  // ends inside S_f
  sol.v = Mat(1, 2);
  sol.v << -0.2, -0.05;
  sol.xi = SlackSequence::zeros(2, 2);
  const auto ws = warmstart_shift(spec, sol);
  CHECK(htilde(ws.xi_warm, spec.alpha_f) == 0.0);
  CHECK(decrease(sol.xi, ws.xi_warm, spec.alpha_f) == 0.0);
}

TEST_CASE("decrease flags a broken warmstart") {
  auto prev = SlackSequence::zeros(2, 2);
  auto warm = SlackSequence::zeros(2, 2);
  warm.stage(0, 0) = 0.5;
  CHECK_THROWS_AS(decrease(prev, warm, 1e6), InvariantError);
}

TEST_CASE("solve_slack_min on the pinned toy states") {
  const auto spec = toy::spec();

  auto sol = solve_slack_min(spec, Vec::Constant(1, 2.0));
  CHECK(sol.h_value == doctest::Approx(1.101).epsilon(1e-6));
  CHECK(sol.xi.stage(0, 0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(sol.xi.stage(0, 1) == doctest::Approx(0.101).epsilon(1e-4));
  CHECK(sol.xi.terminal <= 1e-8);

  CHECK(solve_slack_min(spec, Vec::Zero(1)).h_value <= 1e-8);
  CHECK(solve_slack_min(spec, Vec::Constant(1, 0.95)).h_value <= 1e-8);
}

TEST_CASE("solve_slack_min matches the exhaustive oracle on random states") {
  const auto spec = toy::spec();
  ProblemBank bank(spec, ObjectiveSpec::fuel());
  Rng rng(515151);
  for (int i = 0; i < 50; ++i) {
    const double x = rng.uniform(-3.0, 3.0);
    const auto sol = bank.solve_slack_min(Vec::Constant(1, x));
    const auto ora = toy::oracle_slack_min(x);
    CHECK(std::abs(sol.h_value - ora.value) <= 1e-5 * (1.0 + std::abs(ora.value)));
  }
}

TEST_CASE("solve_objective on the pinned toy states") {
  const auto spec = toy::spec();

  auto sol5 = solve_slack_min(spec, Vec::Constant(1, 2.0));
  auto sol6 = solve_objective(spec, Vec::Constant(1, 2.0), sol5.xi, ObjectiveSpec::fuel());
  CHECK(sol6.objective == doctest::Approx(1.4).epsilon(1e-5));
  CHECK(sol6.v(0, 0) == doctest::Approx(-0.9).epsilon(1e-5));
  CHECK(sol6.v(0, 1) == doctest::Approx(-0.5).epsilon(1e-4));
  CHECK(sol6.h_value == doctest::Approx(1.101).epsilon(1e-6));

  // Safety filter accepts a feasible proposal unchanged.
  auto safe5 = solve_slack_min(spec, Vec::Zero(1));
  Vec p = Vec::Constant(1, 0.3);
  auto safef = solve_objective(spec, Vec::Zero(1), safe5.xi, ObjectiveSpec::filter(), p);
  CHECK(safef.objective <= 1e-6);
  const Vec u = safef.v.col(0) + spec.tube.k_e * (Vec::Zero(1) - safef.z.col(0));
  CHECK(u[0] == doctest::Approx(0.3).epsilon(1e-5));

  // Deep interior with p = 0: nothing to do.
  auto deep5 = solve_slack_min(spec, Vec::Constant(1, 0.05));
  auto deepf = solve_objective(spec, Vec::Constant(1, 0.05), deep5.xi,
                               ObjectiveSpec::filter(), Vec::Zero(1));
  CHECK(deepf.objective <= 1e-6);
  CHECK(htilde(deep5.xi, spec.alpha_f) <= 1e-8);
}

TEST_CASE("solve_objective matches the oracle on random states") {
  const auto spec = toy::spec();
  ProblemBank bank(spec, ObjectiveSpec::fuel());
  Rng rng(626262);
  for (int i = 0; i < 50; ++i) {
    const double x = rng.uniform(-3.0, 3.0);
    const auto sol5 = bank.solve_slack_min(Vec::Constant(1, x));
    const auto sol6 = bank.solve_objective(Vec::Constant(1, x), sol5.xi, Vec(), &sol5);
    const auto ora = toy::oracle_objective(x, sol5.xi.stage(0, 0), sol5.xi.stage(1, 0),
                                           sol5.xi.stage(0, 1), sol5.xi.stage(1, 1),
                                           sol5.xi.terminal);
    CHECK(std::abs(sol6.objective - ora.value) <= 1e-5 * (1.0 + std::abs(ora.value)));
  }
}

TEST_CASE("solve_multiobjective at k = 0 with the initialisation warmstart") {
  const auto spec = toy::spec();
  const Vec x = Vec::Constant(1, 2.0);
  auto sol5 = solve_slack_min(spec, x);
  WarmstartState ws;
  ws.xi_warm = sol5.xi;
  ws.xi_prev_opt = sol5.xi;
  ws.z_warm = sol5.z;
  ws.v_warm = sol5.v;

  auto sol8 = solve_multiobjective(spec, x, ws, 0.0, ObjectiveSpec::fuel());
  CHECK(sol8.objective == doctest::Approx(1.4).epsilon(1e-5));
  CHECK(sol8.xi.stage(0, 0) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(sol8.xi.stage(0, 1) == doctest::Approx(0.101).epsilon(1e-3));
  // The budget is active, so h~ hits the slack-min value exactly.
  CHECK(sol8.h_value == doctest::Approx(sol5.h_value).epsilon(1e-6));

  // c_alpha is irrelevant at k = 0 (Delta h~ = 0): same optimal objective.
  auto sol8b = solve_multiobjective(spec, x, ws, 0.9, ObjectiveSpec::fuel());
  CHECK(sol8b.objective == doctest::Approx(sol8.objective).epsilon(1e-6));
}

TEST_CASE("solve_multiobjective matches the oracle on random states") {
  const auto spec = toy::spec();
  ProblemBank bank(spec, ObjectiveSpec::fuel());
  Rng rng(737373);
  for (int i = 0; i < 50; ++i) {
    const double x = rng.uniform(-3.0, 3.0);
    const auto sol5 = bank.solve_slack_min(Vec::Constant(1, x));
    WarmstartState ws;
    ws.xi_warm = sol5.xi;
    ws.xi_prev_opt = sol5.xi;
    ws.z_warm = sol5.z;
    ws.v_warm = sol5.v;
    const auto sol8 = bank.solve_multiobjective(Vec::Constant(1, x), ws, 0.0, Vec());
    const auto ora = toy::oracle_multi(x, sol5.h_value);
    CHECK(std::abs(sol8.objective - ora.value) <= 1e-5 * (1.0 + std::abs(ora.value)));
  }
}

TEST_CASE("multiobjective with an all-zero warmstart forces hard constraints") {
  const auto spec = toy::spec();
  const Vec x = Vec::Constant(1, 0.2);
  auto sol5 = solve_slack_min(spec, x);
  REQUIRE(sol5.h_value <= 1e-9);
  WarmstartState ws;
  ws.xi_warm = SlackSequence::zeros(2, 2);
  ws.xi_prev_opt = SlackSequence::zeros(2, 2);
  ws.z_warm = sol5.z;
  ws.v_warm = sol5.v;
  auto sol8 = solve_multiobjective(spec, x, ws, 0.5, ObjectiveSpec::fuel());
  CHECK(htilde(sol8.xi, spec.alpha_f) <= 1e-7);
  // Hard problem from x = 0.2: z0 can sit at 0.2 inside the tightened set
  // and S_f is already reached, so no fuel is needed.
  CHECK(sol8.objective <= 1e-6);
}

TEST_CASE("feasibility chain: shifted solutions stay feasible at every successor") {
  const auto spec = toy::spec();
  ProblemBank bank(spec, ObjectiveSpec::fuel());
  Rng rng(101);
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double x = rng.uniform(-2.2, 2.2);
    const auto sol5 = bank.solve_slack_min(Vec::Constant(1, x));
    const auto sol6 = bank.solve_objective(Vec::Constant(1, x), sol5.xi, Vec(), &sol5);
    const auto ws = warmstart_shift(spec, sol6);
    const double u = sol6.v(0, 0) + spec.tube.k_e(0, 0) * (x - sol6.z(0, 0));
    const double w = rng.uniform() < 0.5 ? -0.1 : 0.1;
    const double x_next = x + u + w;

    // Warmstart feasibility at the successor, checked row by row.
    CHECK(contains(spec.tube.e, Vec::Constant(1, x_next - ws.z_warm(0, 0)), 1e-7));
    for (int i = 0; i < spec.horizon; ++i) {
      const Vec resid = spec.x_tight[static_cast<size_t>(i)].residual(ws.z_warm.col(i));
      CHECK((resid - ws.xi_warm.stage.col(i)).maxCoeff() <= 1e-7);
      CHECK(spec.u_tight.contains(ws.v_warm.col(i), 1e-9));
    }
    CHECK(spec.cbf.h_f(ws.z_warm.col(spec.horizon)) <= ws.xi_warm.terminal + 1e-7);
    ++checked;
  }
  CHECK(checked == 1000);
}

TEST_CASE("value function is continuous in x (smoke bound)") {
  const auto spec = toy::spec();
  ProblemBank bank(spec, ObjectiveSpec::fuel());
  Rng rng(2929);
  for (int i = 0; i < 100; ++i) {
    const double x = rng.uniform(-2.5, 2.5);
    const double dx = rng.uniform(-1e-4, 1e-4);
    const double h1 = bank.solve_slack_min(Vec::Constant(1, x)).h_value;
    const double h2 = bank.solve_slack_min(Vec::Constant(1, x + dx)).h_value;
    // Generous Lipschitz-style bound; the terminal slack carries alpha_f.
    CHECK(std::abs(h1 - h2) <= 1e6 * 10.0 * std::abs(dx) + 1e-6 * (1.0 + h1));
  }
}

TEST_CASE("sqp path: bicycle slack minimisation solves and re-simulates exactly") {
  const double deg = M_PI / 180.0;
  const SystemModel bike = bicycle_model(0.09, 0.05);
  Vec eq(4);
  eq << 0.0, 0.0, 1.1, 0.0;
  const SystemModel dev = shifted_model(bike, eq);

  Vec x_lo(4), x_hi(4);
  x_lo << -0.2, -35 * deg, -0.6, -35 * deg;
  x_hi << 0.2, 35 * deg, 0.2, 35 * deg;
  Vec u_lo(2), u_hi(2);
  u_lo << -17.5 * deg, -1.0;
  u_hi << 17.5 * deg, 1.0;
  Vec w_mag = Vec::Zero(4);
  w_mag[1] = 0.5 * deg;

  std::vector<Jacobians> grid;
  for (double psi : {x_lo[1], 0.0, x_hi[1]})
    for (double v : {x_lo[2], 0.0, x_hi[2]})
      for (double del : {x_lo[3], 0.0, x_hi[3]}) {
        Vec z(4);
        z << 0.0, psi, v, del;
        grid.push_back(dev.jacobians(z, Vec::Zero(2)));
      }
  SynthesisOptions opt;
  opt.lambda_grid_points = 33;
  opt.disturbance_inflation = 1.1;
  const Polytope x_poly = Polytope::box(x_lo, x_hi);
  const Polytope u_poly = Polytope::box(u_lo, u_hi);
  const auto tube =
      synth_rpi_grid(grid, DisturbanceBox::symmetric(w_mag), x_poly, u_poly, opt);

  const int n_horizon = 8;
  const auto pad = PaddingSchedule::linear(n_horizon, 1e-3);
  const Polytope x_term = tighten(x_poly, tube.e, pad.at(n_horizon - 1));
  const Ellipsoid ku = map_ellipsoid(tube.k_e, tube.e);
  const Polytope u_tight = tighten(u_poly, ku, 0.0);
  auto cbf = synth_terminal_cbf_grid(grid, x_term, u_tight, opt);
  compute_gamma_f(cbf, x_term, u_tight, opt);

  auto spec = make_problem_spec(dev, n_horizon, x_poly, u_poly, tube, cbf, pad, 1e6);

  Vec x0(4);
  x0 << 0.35, 0.0, 0.0, 0.0;  // outside the lane in deviation coordinates
  const auto sol = solve_slack_min(spec, x0);
  CHECK(sol.h_value > 0.0);

  // Returned trajectory satisfies the true nonlinear recursion exactly.
  Vec z = sol.z.col(0);
  for (int i = 0; i < spec.horizon; ++i) {
    z = dev.step_nominal(z, sol.v.col(i));
    CHECK((z - sol.z.col(i + 1)).cwiseAbs().maxCoeff() <= 1e-8);
  }
  // Slacks cover the violations up to the SQP tolerance.
  for (int i = 0; i < spec.horizon; ++i) {
    const Vec resid = spec.x_tight[static_cast<size_t>(i)].residual(sol.z.col(i));
    CHECK((resid - sol.xi.stage.col(i)).maxCoeff() <= 1e-6);
  }
  CHECK(spec.cbf.h_f(sol.z.col(spec.horizon)) <= sol.xi.terminal + 1e-6);
}
