#include "pcbf/dynamics.hpp"

#include "pcbf/errors.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace pcbf;

namespace {
constexpr double kDeg = M_PI / 180.0;
}

TEST_CASE("toy integrator steps") {
  SystemModel toy = integrator_1d();
  Vec z(1), v(1), w(1);
  z << 1.9;
  v << -0.9;
  CHECK(toy.step_nominal(z, v)[0] == doctest::Approx(1.0));
  z << 2.0;
  w << 0.1;
  CHECK(toy.step(z, v, w)[0] == doctest::Approx(1.2));
  z << 0.0;
  v << 0.0;
  CHECK(toy.step_nominal(z, v)[0] == 0.0);
  CHECK_THROWS_AS(toy.step_nominal(Vec::Zero(2), v), UsageError);
}

TEST_CASE("step_true with zero disturbance equals step_nominal") {
  Rng rng(2024);
  auto models = {integrator_1d(), cwh_model(0.00113, 10.0), bicycle_model(0.09, 0.05)};
  for (const auto& m : models) {
    for (int i = 0; i < 1000; ++i) {
      Vec z = rng.uniform_box(Vec::Constant(m.n_x, -0.5), Vec::Constant(m.n_x, 0.5));
      Vec v = rng.uniform_box(Vec::Constant(m.n_u, -0.5), Vec::Constant(m.n_u, 0.5));
      Vec a = m.step(z, v, Vec::Zero(m.n_x));
      Vec b = m.step_nominal(z, v);
      CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("bicycle equilibrium and displayed rows") {
  SystemModel bike = bicycle_model(0.09, 0.05);

  Vec x(4), u(2);
  x << 0.0, 0.0, 1.1, 0.0;
  u << 0.0, 0.0;
  CHECK((bike.step_nominal(x, u) - x).cwiseAbs().maxCoeff() == doctest::Approx(0.0));

  // Straight driving: only the velocity row moves, ts*tau = 0.025.
  x << 0.0, 0.0, 1.0, 0.0;
  u << 0.0, 0.5;
  Vec next = bike.step_nominal(x, u);
  CHECK(next[0] == doctest::Approx(0.0));
  CHECK(next[1] == doctest::Approx(0.0));
  CHECK(next[2] == doctest::Approx(1.025));
  CHECK(next[3] == doctest::Approx(0.0));

  // Heading kinematics: p_y+ = ts * v * sin(psi).
  x << 0.0, 30.0 * kDeg, 1.0, 0.0;
  u << 0.0, 0.0;
  CHECK(bike.step_nominal(x, u)[0] == doctest::Approx(0.05 * std::sin(30.0 * kDeg)));

  // Disturbance enters the heading row additively.
  x << 0.0, 0.0, 1.0, 10.0 * kDeg;
  Vec w = Vec::Zero(4);
  w[1] = 0.5 * kDeg;
  const double psi_next = bike.step(x, u, w)[1];
  CHECK(psi_next == doctest::Approx(0.05 * (1.0 / 0.09) * std::tan(10.0 * kDeg) + 0.5 * kDeg));
}

TEST_CASE("bicycle full step against independent re-derivation") {
  SystemModel bike = bicycle_model(0.07, 0.05);
  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    Vec x(4), u(2);
    x << rng.uniform(-0.3, 0.3), rng.uniform(-0.5, 0.5), rng.uniform(0.5, 1.3),
        rng.uniform(-0.6, 0.6);
    u << rng.uniform(-0.3, 0.3), rng.uniform(-1.0, 1.0);
    Vec w = Vec::Zero(4);
    w[1] = rng.uniform(-0.01, 0.01);

    // Reference written directly from the four update rows.
    Vec ref(4);
    ref[0] = x[0] + 0.05 * x[2] * std::sin(x[1]);
    ref[1] = x[1] + 0.05 * (x[2] / 0.07) * std::tan(x[3]) + w[1];
    ref[2] = x[2] + 0.05 * u[1];
    ref[3] = x[3] + u[0];
    CHECK((bike.step(x, u, w) - ref).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("bicycle jacobians match finite differences") {
  SystemModel bike = bicycle_model(0.09, 0.05);
  Vec x(4), u(2);
  x << 0.0, 0.0, 1.1, 0.0;
  u << 0.0, 0.0;
  Jacobians jac = bike.jacobians(x, u);

  // Spot values: dp_y+/dpsi = ts*v, dsteer enters with unit gain.
  CHECK(jac.a(0, 1) == doctest::Approx(0.05 * 1.1).epsilon(1e-12));
  CHECK(jac.b(3, 0) == doctest::Approx(1.0));

  auto fx = [&](const Vec& xx) { return bike.step_nominal(xx, u); };
  auto fu = [&](const Vec& uu) { return bike.step_nominal(x, uu); };
  Mat a_fd = oracles::numeric_jacobian(fx, x);
  Mat b_fd = oracles::numeric_jacobian(fu, u);
  CHECK((jac.a - a_fd).cwiseAbs().maxCoeff() <= 1e-6 * (1.0 + a_fd.cwiseAbs().maxCoeff()));
  CHECK((jac.b - b_fd).cwiseAbs().maxCoeff() <= 1e-6 * (1.0 + b_fd.cwiseAbs().maxCoeff()));
}

TEST_CASE("linearize agrees with central differences on random interior points") {
  SystemModel bike = bicycle_model(0.09, 0.05);
  Rng rng(31);
  for (int i = 0; i < 100; ++i) {
    Vec x(4), u(2);
    x << rng.uniform(-0.2, 0.2), rng.uniform(-0.5, 0.5), rng.uniform(0.5, 1.3),
        rng.uniform(-0.5, 0.5);
    u << rng.uniform(-0.2, 0.2), rng.uniform(-0.5, 0.5);
    Jacobians jac = bike.jacobians(x, u);
    auto fx = [&](const Vec& xx) { return bike.step_nominal(xx, u); };
    Mat a_fd = oracles::numeric_jacobian(fx, x);
    CHECK((jac.a - a_fd).cwiseAbs().maxCoeff() <=
          1e-5 * (1.0 + a_fd.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("cwh dynamics against matrix exponential oracle") {
  const double n = 0.00113;
  const double ts = 10.0;
  SystemModel cwh = cwh_model(n, ts);

  Mat ac = Mat::Zero(6, 6);
  ac.block(0, 3, 3, 3) = Mat::Identity(3, 3);
  ac(3, 0) = 3.0 * n * n;
  ac(3, 4) = 2.0 * n;
  ac(4, 3) = -2.0 * n;
  ac(5, 2) = -n * n;
  Mat bc = Mat::Zero(6, 3);
  bc.block(3, 0, 3, 3) = Mat::Identity(3, 3);

  Mat aug = Mat::Zero(9, 9);
  aug.block(0, 0, 6, 6) = ac * ts;
  aug.block(0, 6, 6, 3) = bc * ts;
  const Mat exp_ref = oracles::expm_taylor(aug, 30);

  CHECK((cwh.a - exp_ref.block(0, 0, 6, 6)).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((cwh.b - exp_ref.block(0, 6, 6, 3)).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("cwh spectral radius is at least one (drift dynamics)") {
  SystemModel cwh = cwh_model(0.00113, 10.0);
  Eigen::EigenSolver<Mat> eig(cwh.a);
  CHECK(eig.eigenvalues().cwiseAbs().maxCoeff() >= 1.0 - 1e-12);
}

TEST_CASE("cwh semigroup property A(2ts) = A(ts)^2") {
  SystemModel one = cwh_model(0.00113, 10.0);
  SystemModel two = cwh_model(0.00113, 20.0);
  CHECK((two.a - one.a * one.a).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("cwh position rows approach double integrators as n -> 0") {
  SystemModel cwh = cwh_model(1e-9, 10.0);
  Mat block(2, 2);
  block << 1.0, 10.0, 0.0, 1.0;
  for (int axis = 0; axis < 3; ++axis) {
    CHECK(cwh.a(axis, axis) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(cwh.a(axis, axis + 3) == doctest::Approx(10.0).epsilon(1e-6));
    CHECK(cwh.a(axis + 3, axis + 3) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("shifted model moves the equilibrium to the origin") {
  SystemModel bike = bicycle_model(0.09, 0.05);
  Vec eq(4);
  eq << 0.0, 0.0, 1.1, 0.0;
  SystemModel dev = shifted_model(bike, eq);
  CHECK(dev.step_nominal(Vec::Zero(4), Vec::Zero(2)).cwiseAbs().maxCoeff() <= 1e-14);

  Vec xbar(4), u(2);
  xbar << 0.1, 0.05, -0.1, 0.02;
  u << 0.01, 0.3;
  Vec w = Vec::Zero(4);
  w[1] = 0.002;
  CHECK((dev.step(xbar, u, w) - (bike.step(xbar + eq, u, w) - eq)).cwiseAbs().maxCoeff() <=
        1e-14);

  Vec bad(4);
  bad << 0.0, 0.3, 1.0, 0.2;
  CHECK_THROWS_AS(shifted_model(bike, bad), UsageError);
}

TEST_CASE("disturbance box rules") {
  CHECK_THROWS_AS(DisturbanceBox(Vec::Constant(1, 0.1), Vec::Constant(1, 0.2)), UsageError);
  DisturbanceBox w(Vec::Constant(2, -0.5), Vec::Constant(2, 0.5));
  CHECK(w.active_dims().size() == 2);
  CHECK(DisturbanceBox::zero(3).is_zero());

  Vec lo = Vec::Zero(4), hi = Vec::Zero(4);
  lo[1] = -0.1;
  hi[1] = 0.1;
  DisturbanceBox heading_only(lo, hi);
  CHECK(heading_only.active_dims() == std::vector<int>{1});
}
