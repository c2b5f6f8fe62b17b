#include "pcbf/geometry.hpp"

#include "pcbf/errors.hpp"
#include "pcbf/util.hpp"

#include <Eigen/Dense>
#include <doctest.h>

#include <cmath>

using namespace pcbf;

TEST_CASE("support function on axis-aligned ellipsoid") {
  Ellipsoid e{(Mat(2, 2) << 0.01, 0.0, 0.0, 4.0).finished()};
  Vec a(2);
  a << 1.0, 0.0;
  CHECK(support_on_ellipsoid(a, e) == doctest::Approx(0.1).epsilon(1e-12));
  a << 0.0, 1.0;
  CHECK(support_on_ellipsoid(a, e) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("support function of the degenerate ellipsoid is zero") {
  Ellipsoid e = Ellipsoid::zero(3);
  Vec a = Vec::Ones(3);
  CHECK(support_on_ellipsoid(a, e) == 0.0);
}

TEST_CASE("support function matches sampled boundary maximum") {
  Rng rng(1234);
  for (int trial = 0; trial < 5; ++trial) {
    Mat root = Mat::NullaryExpr(3, 3, [&](Eigen::Index, Eigen::Index) {
      return rng.uniform(-1.0, 1.0);
    });
    Mat s = root * root.transpose() + 0.05 * Mat::Identity(3, 3);
    Ellipsoid e{s};
    Vec a = rng.gauss_vec(3);

    // Boundary points are L*u with u on the unit sphere, S = L L'.
    Eigen::LLT<Mat> llt(s);
    Mat l = llt.matrixL();
    double best = 0.0;
    for (int i = 0; i < 100000; ++i) {
      Vec u = rng.gauss_vec(3);
      u.normalize();
      best = std::max(best, a.dot(l * u));
    }
    const double sup = support_on_ellipsoid(a, e);
    CHECK(best <= sup * (1.0 + 1e-9));
    CHECK(best >= sup * (1.0 - 1e-3));
  }
}

TEST_CASE("support function is positively homogeneous") {
  Rng rng(99);
  Mat root = Mat::NullaryExpr(4, 4, [&](Eigen::Index, Eigen::Index) {
    return rng.uniform(-1.0, 1.0);
  });
  Ellipsoid e{Mat(root * root.transpose())};
  for (int i = 0; i < 50; ++i) {
    Vec a = rng.gauss_vec(4);
    const double alpha = rng.uniform(0.1, 10.0);
    CHECK(support_on_ellipsoid(alpha * a, e) ==
          doctest::Approx(alpha * support_on_ellipsoid(a, e)).epsilon(1e-10));
  }
}

TEST_CASE("tighten unit interval by tube radius and padding") {
  Vec lo(1), hi(1);
  lo << -1.0;
  hi << 1.0;
  Polytope p = Polytope::box(lo, hi);
  Ellipsoid e{(Mat(1, 1) << 0.01).finished()};  // radius 0.1

  Polytope t0 = tighten(p, e, 0.0);
  CHECK(t0.b[0] == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(t0.b[1] == doctest::Approx(0.9).epsilon(1e-12));

  Polytope t1 = tighten(p, e, 1e-3);
  CHECK(t1.b[0] == doctest::Approx(0.899).epsilon(1e-12));

  Polytope id = tighten(p, Ellipsoid::zero(1), 0.0);
  CHECK(id.b[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(id.b[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("tightening is monotone in the ellipsoid") {
  Rng rng(7);
  Mat root = Mat::NullaryExpr(2, 2, [&](Eigen::Index, Eigen::Index) {
    return rng.uniform(-1.0, 1.0);
  });
  Mat s1 = root * root.transpose();
  Mat s2 = s1 + 0.3 * Mat::Identity(2, 2);  // E1 subset of E2
  Vec lo = Vec::Constant(2, -3.0), hi = Vec::Constant(2, 5.0);
  Polytope p = Polytope::box(lo, hi);
  Polytope t1 = tighten(p, Ellipsoid{s1}, 0.0);
  Polytope t2 = tighten(p, Ellipsoid{s2}, 0.0);
  CHECK((t2.b.array() <= t1.b.array() + 1e-12).all());
}

TEST_CASE("tightening soundness: tightened point plus tube stays inside") {
  Rng rng(41);
  Mat root = Mat::NullaryExpr(2, 2, [&](Eigen::Index, Eigen::Index) {
    return rng.uniform(-0.4, 0.4);
  });
  Mat s = root * root.transpose() + 0.01 * Mat::Identity(2, 2);
  Ellipsoid e{s};
  Polytope p = Polytope::box(Vec::Constant(2, -2.0), Vec::Constant(2, 2.0));
  Polytope tight = tighten(p, e, 0.0);
  Eigen::LLT<Mat> llt(s);
  Mat l = llt.matrixL();

  int checked = 0;
  for (int i = 0; i < 20000 && checked < 1000; ++i) {
    Vec z = rng.uniform_box(Vec::Constant(2, -2.0), Vec::Constant(2, 2.0));
    if (!tight.contains(z)) continue;
    Vec u = rng.gauss_vec(2);
    u *= std::pow(rng.uniform(), 0.5) / u.norm();
    Vec err = l * u;
    REQUIRE(contains(e, err, 1e-9));
    CHECK(p.contains(z + err, 1e-9));
    ++checked;
  }
  CHECK(checked == 1000);
}

TEST_CASE("map_ellipsoid scales shapes and adjoint identity holds") {
  Ellipsoid e{(Mat(1, 1) << 0.01).finished()};
  Mat k(1, 1);
  k << 0.5;
  CHECK(map_ellipsoid(k, e).shape(0, 0) == doctest::Approx(0.0025).epsilon(1e-14));
  CHECK(map_ellipsoid(Mat::Zero(1, 1), e).degenerate());

  Rng rng(5);
  Mat root = Mat::NullaryExpr(3, 3, [&](Eigen::Index, Eigen::Index) {
    return rng.uniform(-1.0, 1.0);
  });
  Ellipsoid e3{Mat(root * root.transpose())};
  Mat km = Mat::NullaryExpr(2, 3, [&](Eigen::Index, Eigen::Index) {
    return rng.uniform(-1.0, 1.0);
  });
  for (int i = 0; i < 20; ++i) {
    Vec a = rng.gauss_vec(2);
    CHECK(support_on_ellipsoid(a, map_ellipsoid(km, e3)) ==
          doctest::Approx(support_on_ellipsoid(km.transpose() * a, e3)).epsilon(1e-10));
  }
}

TEST_CASE("ellipsoid membership") {
  Ellipsoid e{(Mat(1, 1) << 0.01).finished()};
  CHECK(contains(e, Vec::Zero(1), 0.0));
  Vec boundary(1);
  boundary << 0.1;
  CHECK(contains(e, boundary, 1e-12));
  Vec outside(1);
  outside << 0.1001;
  CHECK(!contains(e, outside, 1e-9));

  // Singular shape: flat directions admit only zero components.
  Mat s = Mat::Zero(2, 2);
  s(0, 0) = 1.0;
  Ellipsoid flat{s};
  Vec in(2), out(2);
  in << 0.5, 0.0;
  out << 0.5, 0.1;
  CHECK(contains(flat, in, 1e-9));
  CHECK(!contains(flat, out, 1e-9));
}

TEST_CASE("padding schedule construction rules") {
  PaddingSchedule p = PaddingSchedule::linear(4, 1e-3);
  CHECK(p.at(0) == 0.0);
  CHECK(p.at(3) == doctest::Approx(3e-3));
  CHECK_THROWS_AS(PaddingSchedule({0.0, 1e-3, 1e-3}), UsageError);
  CHECK_THROWS_AS(PaddingSchedule({1e-4, 2e-4}), UsageError);
  CHECK_NOTHROW(PaddingSchedule::linear(1, 0.0));  // N=1 has only Delta_0
}

TEST_CASE("polytope validation") {
  CHECK_THROWS_AS(Polytope(Mat::Zero(1, 2), Vec::Ones(1)), UsageError);
  Polytope p = Polytope::box(Vec::Constant(2, -1.0), Vec::Constant(2, 1.0));
  Vec x(2);
  x << 0.5, -0.5;
  CHECK(p.contains(x));
  CHECK(p.residual(x).maxCoeff() == doctest::Approx(-0.5));
}
