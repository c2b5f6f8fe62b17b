#pragma once

#include "pcbf/dynamics.hpp"
#include "pcbf/geometry.hpp"

#include <string>
#include <vector>

namespace pcbf {

/// Robust positively invariant error tube: ellipsoid E, linear error feedback
/// kappa(e) = K_e e and the certified contraction grid point lambda.
struct RpiTube {
  Ellipsoid e;
  Mat k_e;
  double contraction = 0.0;

  bool degenerate() const { return e.degenerate(); }
};

/// Terminal certificate h_f(z) = z'Pz - 1 with terminal policy
/// pi_f(z) = K_f z, domain D_f = {h_f <= gamma_f} and nominal contraction
/// factor rho of (A + B K_f) in the P metric.
struct TerminalCbf {
  Mat p;
  Mat k_f;
  double gamma_f = 0.0;
  double rho = 0.0;

  double h_f(const Vec& z) const { return z.dot(p * z) - 1.0; }
  Vec policy(const Vec& z) const { return k_f * z; }
  /// Guaranteed decrease margin (1 - rho) * (h_f(z) + 1).
  double decrease_margin(const Vec& z) const { return (1.0 - rho) * (h_f(z) + 1.0); }
};

struct SynthesisOptions {
  int lambda_grid_points = 99;        // lambda in {1,...,points} / (points+1)
  double gamma_floor = 1e-6;
  double contraction_max = 0.995;     // re-solve threshold for rho
  double disturbance_inflation = 1.0; // margin factor on the disturbance ellipsoid
};

/// RPI synthesis for gridded linearisations sharing one (S, K_e): per grid
/// point lambda an SDP minimises the (squared, normalised) constraint
/// tightening subject to the invariance LMI; the best feasible point by the
/// true support-function objective wins.
RpiTube synth_rpi_grid(const std::vector<Jacobians>& systems, const DisturbanceBox& w,
                       const Polytope& x_poly, const Polytope& u_poly,
                       const SynthesisOptions& opt = {});

RpiTube synth_rpi(const Mat& a, const Mat& b, const DisturbanceBox& w,
                  const Polytope& x_poly, const Polytope& u_poly,
                  const SynthesisOptions& opt = {});

/// Maximum-volume invariant ellipsoid: maximise logdet(E) subject to the
/// invariance LMI and the state/input inclusion LMIs for the tightened sets.
/// Recovers P = E^{-1}, K_f = Y P, and the contraction factor rho; if rho
/// lands above opt.contraction_max the invariance block is strengthened and
/// the SDP re-solved so the decrease margin stays bounded away from zero.
TerminalCbf synth_terminal_cbf_grid(const std::vector<Jacobians>& systems,
                                    const Polytope& x_tight, const Polytope& u_tight,
                                    const SynthesisOptions& opt = {});

TerminalCbf synth_terminal_cbf(const Mat& a, const Mat& b, const Polytope& x_tight,
                               const Polytope& u_tight, const SynthesisOptions& opt = {});

/// Largest gamma such that D_f = {h_f <= gamma} stays inside the tightened
/// state set and K_f D_f inside the tightened input set, floored at
/// opt.gamma_floor. When a row binds S_f exactly the level set is shrunk by
/// 0.99 (repeatedly if needed) so that gamma_f > 0 strictly; cbf.p is updated
/// accordingly and cbf.gamma_f is set on success.
double compute_gamma_f(TerminalCbf& cbf, const Polytope& x_tight, const Polytope& u_tight,
                       const SynthesisOptions& opt = {});

struct VerifyReport {
  int samples = 0;
  int violations = 0;
  double worst_invariance = 0.0;  // max h_f(z+) over S_f samples
  double worst_decrease = 0.0;    // max shortfall of the decrease condition
  double worst_input = 0.0;       // max tightened-input residual
  Vec witness;                    // first violating state, empty if none

  bool pass() const { return violations == 0; }
  std::string summary() const;
};

/// Samples states uniformly in D_f and checks, against the actual model
/// dynamics, (a) invariance of S_f under pi_f, (b) the decrease condition on
/// D_f \ S_f, (c) admissibility pi_f(z) in U_tight.
VerifyReport verify_terminal(const TerminalCbf& cbf, const SystemModel& model,
                             const Polytope& u_tight, int n_samples,
                             std::uint64_t seed);

/// S_f subseteq X_tight, rowwise: sqrt(a_i' P^{-1} a_i) <= b_i + 1e-9.
bool verify_sf_containment(const TerminalCbf& cbf, const Polytope& x_tight);

/// Monte-Carlo check of Assumption 3 on the true (possibly nonlinear) error
/// dynamics: e+ = f(z + e, v + K_e e, w) - f(z, v, 0) stays in E for sampled
/// states, inputs, boundary errors and disturbance vertices.
VerifyReport verify_rpi(const RpiTube& tube, const SystemModel& model, const Vec& z_lo,
                        const Vec& z_hi, const Vec& v_lo, const Vec& v_hi,
                        const DisturbanceBox& w, int n_samples, std::uint64_t seed);

}  // namespace pcbf
