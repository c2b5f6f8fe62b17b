#pragma once

// Exhaustive grid oracle for the pinned 1-D instance, independent of the
// library's solver path. Multi-level refinement around the incumbent brings
// the base 1e-4 grid down to ~1e-7 steps, which is enough for objective
// comparisons at the (1 + |value|)-scaled 1e-5 tolerance.

#include "toy_instance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace toy {

struct OraclePoint {
  double z0 = 0.0, v0 = 0.0, v1 = 0.0;
  double value = std::numeric_limits<double>::infinity();
};

inline double slack0(double z) { return std::max(0.0, std::abs(z) - kB0); }
inline double slack1(double z) { return std::max(0.0, std::abs(z) - kB1); }
inline double slack_term(double z) { return std::max(0.0, 4.0 * z * z - 1.0); }

inline double htilde_of(double z0, double v0, double v1) {
  const double z1 = z0 + v0;
  const double z2 = z1 + v1;
  return slack0(z0) + slack1(z1) + kAlphaF * slack_term(z2);
}

template <typename F>
OraclePoint grid_minimize(F&& value, double x, int levels = 5, int pts = 41) {
  OraclePoint best;
  double z0_lo = x - kTube, z0_hi = x + kTube;
  double v_lo = -kInput, v_hi = kInput;
  double wz = (z0_hi - z0_lo), wv = (v_hi - v_lo);
  double cz0 = 0.5 * (z0_lo + z0_hi), cv0 = 0.0, cv1 = 0.0;

  for (int level = 0; level < levels; ++level) {
    OraclePoint local;
    const double z0a = std::max(x - kTube, cz0 - 0.5 * wz);
    const double z0b = std::min(x + kTube, cz0 + 0.5 * wz);
    const double v0a = std::max(-kInput, cv0 - 0.5 * wv);
    const double v0b = std::min(kInput, cv0 + 0.5 * wv);
    const double v1a = std::max(-kInput, cv1 - 0.5 * wv);
    const double v1b = std::min(kInput, cv1 + 0.5 * wv);
    for (int i = 0; i < pts; ++i) {
      const double z0 = z0a + (z0b - z0a) * i / (pts - 1);
      for (int j = 0; j < pts; ++j) {
        const double v0 = v0a + (v0b - v0a) * j / (pts - 1);
        for (int k = 0; k < pts; ++k) {
          const double v1 = v1a + (v1b - v1a) * k / (pts - 1);
          const double val = value(z0, v0, v1);
          if (val < local.value) local = {z0, v0, v1, val};
        }
      }
    }
    best = local;
    cz0 = local.z0;
    cv0 = local.v0;
    cv1 = local.v1;
    // Shrink to a couple of cells around the incumbent.
    wz = 4.0 * (z0b - z0a) / (pts - 1);
    wv = 4.0 * (v0b - v0a) / (pts - 1);
  }
  return best;
}

/// Optimal value of the slack minimisation at x.
inline OraclePoint oracle_slack_min(double x) {
  return grid_minimize([](double z0, double v0, double v1) { return htilde_of(z0, v0, v1); },
                       x);
}

/// Fuel objective with slacks frozen to (xi0, xi1 per row, xi2): infeasible
/// points evaluate to +inf.
inline OraclePoint oracle_objective(double x, double xi0p, double xi0m, double xi1p,
                                    double xi1m, double xi2) {
  const double inf = std::numeric_limits<double>::infinity();
  auto value = [=](double z0, double v0, double v1) {
    if (z0 > kB0 + xi0p + 1e-12 || -z0 > kB0 + xi0m + 1e-12) return inf;
    const double z1 = z0 + v0;
    if (z1 > kB1 + xi1p + 1e-12 || -z1 > kB1 + xi1m + 1e-12) return inf;
    const double z2 = z1 + v1;
    if (4.0 * z2 * z2 - 1.0 > xi2 + 1e-9) return inf;
    return std::abs(v0) + std::abs(v1);
  };
  return grid_minimize(value, x);
}

/// Fuel objective with free slacks under the decrease budget on h~.
inline OraclePoint oracle_multi(double x, double bound) {
  const double inf = std::numeric_limits<double>::infinity();
  auto value = [=](double z0, double v0, double v1) {
    if (htilde_of(z0, v0, v1) > bound + 1e-9 * (1.0 + bound)) return inf;
    return std::abs(v0) + std::abs(v1);
  };
  return grid_minimize(value, x);
}

}  // namespace toy
