#include "pcbf/synthesis.hpp"

#include "pcbf/errors.hpp"

#include <Eigen/Dense>
#include <doctest.h>

#include <cmath>

using namespace pcbf;

namespace {

Polytope interval(double lo, double hi) {
  return Polytope::box(Vec::Constant(1, lo), Vec::Constant(1, hi));
}

// Scalar RPI tube reference: minimal radius over a grid of error-feedback
// gains with the exact 1-D fixed point r = |a + b k| r + w_max.
double rpi_radius_oracle(double a, double b, double w_max) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 4000; ++i) {
    const double k = -2.0 + 4.0 * i / 4000.0;
    const double acl = std::abs(a + b * k);
    if (acl >= 1.0) continue;
    best = std::min(best, w_max / (1.0 - acl));
  }
  return best;
}

}  // namespace

TEST_CASE("rpi synthesis: scalar integrator reaches the deadbeat radius") {
  const auto tube = synth_rpi(Mat::Ones(1, 1), Mat::Ones(1, 1),
                              DisturbanceBox::symmetric(Vec::Constant(1, 0.1)),
                              interval(-1, 1), interval(-1, 1));
  const double radius = std::sqrt(tube.e.shape(0, 0));
  const double oracle = rpi_radius_oracle(1.0, 1.0, 0.1);
  CHECK(oracle == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(radius <= 0.101);
  CHECK(radius >= oracle - 1e-6);
  CHECK(tube.k_e(0, 0) == doctest::Approx(-1.0).epsilon(0.2));
}

TEST_CASE("rpi synthesis: uncontrolled contraction has the fixed-point radius") {
  const auto tube = synth_rpi(Mat::Constant(1, 1, 0.5), Mat::Zero(1, 1),
                              DisturbanceBox::symmetric(Vec::Constant(1, 0.1)),
                              interval(-1, 1), interval(-1, 1));
  const double radius = std::sqrt(tube.e.shape(0, 0));
  CHECK(radius == doctest::Approx(0.2).epsilon(2e-3));
}

TEST_CASE("rpi synthesis: zero disturbance degenerates the tube") {
  const auto tube = synth_rpi(Mat::Ones(1, 1), Mat::Ones(1, 1), DisturbanceBox::zero(1),
                              interval(-1, 1), interval(-1, 1));
  CHECK(tube.degenerate());
  CHECK(tube.k_e.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rpi monte carlo: toy tube is invariant for the linear recursion") {
  const auto tube = synth_rpi(Mat::Ones(1, 1), Mat::Ones(1, 1),
                              DisturbanceBox::symmetric(Vec::Constant(1, 0.1)),
                              interval(-1, 1), interval(-1, 1));
  const double acl = 1.0 + tube.k_e(0, 0);
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    Vec e = Vec::Constant(1, rng.uniform(-1.0, 1.0) * std::sqrt(tube.e.shape(0, 0)));
    for (int k = 0; k < 1000; ++k) {
      e[0] = acl * e[0] + rng.uniform(-0.1, 0.1);
      REQUIRE(contains(tube.e, e, 1e-6));
    }
  }
}

TEST_CASE("terminal cbf: scalar state-limited ellipsoid") {
  const auto cbf = synth_terminal_cbf(Mat::Ones(1, 1), Mat::Ones(1, 1),
                                      interval(-0.799, 0.799), interval(-0.9, 0.9));
  CHECK(cbf.p(0, 0) == doctest::Approx(1.0 / (0.799 * 0.799)).epsilon(1e-4));
  CHECK(std::sqrt(1.0 / cbf.p(0, 0)) == doctest::Approx(0.799).epsilon(1e-4));
  CHECK(cbf.rho < 1.0);

  // Feasibility re-check at the returned point: invariance and inclusions.
  const double e = 1.0 / cbf.p(0, 0);
  const double acl = 1.0 + cbf.k_f(0, 0);
  CHECK(acl * acl * e <= e + 1e-8);
  CHECK(e <= 0.799 * 0.799 + 1e-8);
  CHECK(cbf.k_f(0, 0) * cbf.k_f(0, 0) * e <= 0.81 + 1e-8);
}

TEST_CASE("terminal cbf: halving the state box halves the radius") {
  const auto big = synth_terminal_cbf(Mat::Ones(1, 1), Mat::Ones(1, 1),
                                      interval(-0.799, 0.799), interval(-0.9, 0.9));
  const auto small = synth_terminal_cbf(Mat::Ones(1, 1), Mat::Ones(1, 1),
                                        interval(-0.3995, 0.3995), interval(-0.9, 0.9));
  const double ratio = std::sqrt(big.p(0, 0) / small.p(0, 0));
  CHECK(ratio == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("compute_gamma_f: binding state row triggers the 0.99 rescale") {
  TerminalCbf cbf;
  cbf.p = Mat::Constant(1, 1, 1.0 / (0.799 * 0.799));
  cbf.k_f = Mat::Constant(1, 1, -1.0);
  cbf.rho = 0.0;
  const Polytope x_tight = interval(-0.799, 0.799);
  const Polytope u_tight = interval(-0.9, 0.9);

  // Input row value before any rescale matches the hand formula.
  const double input_gamma = 0.81 * (1.0 / (0.799 * 0.799)) - 1.0;
  CHECK(input_gamma == doctest::Approx(0.2688).epsilon(1e-3));

  const double gamma = compute_gamma_f(cbf, x_tight, u_tight);
  CHECK(gamma > 0.0);
  CHECK(gamma == doctest::Approx(1.0 / 0.99 - 1.0).epsilon(1e-9));
  // D_f stays admissible: policy inputs inside the tightened set.
  const double df_radius = std::sqrt((1.0 + gamma) / cbf.p(0, 0));
  CHECK(df_radius <= 0.9 + 1e-9);
  CHECK(df_radius <= 0.799 + 1e-9);
}

TEST_CASE("compute_gamma_f: isotropic case matches the bisection oracle") {
  TerminalCbf cbf;
  cbf.p = 2.0 * Mat::Identity(2, 2);
  cbf.k_f = Mat::Zero(1, 2);
  cbf.rho = 0.5;
  const Polytope box = Polytope::box(Vec::Constant(2, -1.0), Vec::Constant(2, 1.0));
  const Polytope u_tight = interval(-1.0, 1.0);

  // Bisection on gamma: level set {2||z||^2 <= 1 + gamma} inside the unit box.
  double lo = 0.0, hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double radius = std::sqrt((1.0 + mid) / 2.0);
    (radius <= 1.0 ? lo : hi) = mid;
  }
  const double gamma = compute_gamma_f(cbf, box, u_tight);
  CHECK(gamma == doctest::Approx(lo).epsilon(1e-9));
  CHECK(gamma == doctest::Approx(1.0).epsilon(1e-9));

  // Monotonicity: scaling P up (smaller S_f) enlarges gamma.
  TerminalCbf tighter = cbf;
  tighter.p *= 4.0;
  CHECK(compute_gamma_f(tighter, box, u_tight) > gamma);
}

TEST_CASE("verify_sf_containment on scalar cases and rotated sampling oracle") {
  TerminalCbf inside;
  inside.p = Mat::Constant(1, 1, 1.0 / (0.79 * 0.79));
  CHECK(verify_sf_containment(inside, interval(-0.799, 0.799)));
  TerminalCbf outside;
  outside.p = Mat::Constant(1, 1, 1.0 / (0.8 * 0.8));
  CHECK(!verify_sf_containment(outside, interval(-0.799, 0.799)));

  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const double angle = rng.uniform(0.0, M_PI);
    Mat rot(2, 2);
    rot << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    Mat shape = rot *
                Eigen::Vector2d(rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0)).asDiagonal() *
                rot.transpose();
    TerminalCbf cbf;
    cbf.p = shape.inverse();
    const Polytope box = Polytope::box(Vec::Constant(2, -1.2), Vec::Constant(2, 1.2));
    const bool claimed = verify_sf_containment(cbf, box);

    Eigen::LLT<Mat> llt(shape);
    Mat l = llt.matrixL();
    bool sampled_inside = true;
    for (int i = 0; i < 100000; ++i) {
      Vec u = rng.gauss_vec(2);
      u.normalize();
      if (!box.contains(l * u, 1e-9)) {
        sampled_inside = false;
        break;
      }
    }
    CHECK(claimed == sampled_inside);
  }
}

TEST_CASE("verify_terminal: synthesized scalar certificate has no violations") {
  auto cbf = synth_terminal_cbf(Mat::Ones(1, 1), Mat::Ones(1, 1), interval(-0.799, 0.799),
                                interval(-0.9, 0.9));
  compute_gamma_f(cbf, interval(-0.799, 0.799), interval(-0.9, 0.9));
  const SystemModel model = integrator_1d();
  const auto rep = verify_terminal(cbf, model, interval(-0.9, 0.9), 10000, 2024);
  CHECK(rep.pass());

  // Negative control: a sign-flipped gain destroys the decrease.
  TerminalCbf broken = cbf;
  broken.k_f = -broken.k_f;
  const auto bad = verify_terminal(broken, model, interval(-0.9, 0.9), 10000, 2024);
  CHECK(bad.violations > 0);
}

TEST_CASE("verify_rpi: nonlinear sampling accepts a sound tube") {
  // Bicycle tube from a tiny gridded synthesis; the check runs the true
  // nonlinear error recursion.
  const SystemModel bike = bicycle_model(0.09, 0.05);
  Vec eq(4);
  eq << 0.0, 0.0, 1.1, 0.0;
  const SystemModel dev = shifted_model(bike, eq);

  const double deg = M_PI / 180.0;
  Vec x_lo(4), x_hi(4);
  x_lo << -0.2, -35 * deg, 0.5 - 1.1, -35 * deg;
  x_hi << 0.2, 35 * deg, 1.3 - 1.1, 35 * deg;
  Vec u_lo(2), u_hi(2);
  u_lo << -17.5 * deg, -1.0;
  u_hi << 17.5 * deg, 1.0;
  Vec w_mag = Vec::Zero(4);
  w_mag[1] = 0.5 * deg;
  const DisturbanceBox w = DisturbanceBox::symmetric(w_mag);

  std::vector<Jacobians> grid;
  const Vec u0 = Vec::Zero(2);
  for (double psi : {x_lo[1], 0.0, x_hi[1]}) {
    for (double v : {x_lo[2], 0.0, x_hi[2]}) {
      for (double del : {x_lo[3], 0.0, x_hi[3]}) {
        Vec z(4);
        z << 0.0, psi, v, del;
        grid.push_back(dev.jacobians(z, u0));
      }
    }
  }
  SynthesisOptions opt;
  opt.lambda_grid_points = 33;
  opt.disturbance_inflation = 1.1;
  const auto tube = synth_rpi_grid(grid, w, Polytope::box(x_lo, x_hi),
                                   Polytope::box(u_lo, u_hi), opt);
  const auto rep =
      verify_rpi(tube, dev, x_lo, x_hi, u_lo * 0.8, u_hi * 0.8, w, 20000, 99);
  CHECK(rep.samples == 20000);
  CHECK(rep.violations == 0);
}
