#include "pcbf/synthesis.hpp"

#include "pcbf/errors.hpp"
#include "pcbf/sdp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <sstream>

namespace pcbf {

namespace {

// Symmetric-matrix variable packing: S = sum_p x_p * basis_p with unit
// diagonal bases and symmetrised off-diagonal bases.
struct SymVar {
  int offset;
  int n;

  int count() const { return n * (n + 1) / 2; }

  // Enumerates (variable index, basis matrix).
  template <typename F>
  void for_each(F&& f) const {
    int idx = offset;
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j, ++idx) {
        Mat basis = Mat::Zero(n, n);
        basis(i, j) = 1.0;
        basis(j, i) = 1.0;
        if (i == j) basis(i, j) = 1.0;
        f(idx, basis);
      }
    }
  }

  Mat unpack(const Vec& x) const {
    Mat s = Mat::Zero(n, n);
    int idx = offset;
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j, ++idx) {
        s(i, j) = x[idx];
        s(j, i) = x[idx];
      }
    }
    return s;
  }
};

struct MatVar {
  int offset;
  int rows;
  int cols;

  int count() const { return rows * cols; }
  int index(int r, int c) const { return offset + r * cols + c; }

  Mat unpack(const Vec& x) const {
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = x[index(r, c)];
    return m;
  }
};

// Ellipsoidal outer bound of the disturbance box on its active coordinates:
// G maps the reduced disturbance into the state, Q_d = n_d * diag(r_i^2).
struct DisturbanceEllipsoid {
  Mat g;        // n x n_d
  Mat qd_inv;   // n_d x n_d
};

DisturbanceEllipsoid disturbance_ellipsoid(const DisturbanceBox& w, double inflation) {
  const std::vector<int> dims = w.active_dims();
  const int n = w.dim();
  const int nd = static_cast<int>(dims.size());
  DisturbanceEllipsoid out;
  out.g = Mat::Zero(n, nd);
  out.qd_inv = Mat::Zero(nd, nd);
  for (int k = 0; k < nd; ++k) {
    const int i = dims[static_cast<size_t>(k)];
    out.g(i, k) = 1.0;
    const double radius =
        inflation * std::max(std::abs(w.lower[i]), std::abs(w.upper[i]));
    const double q = static_cast<double>(nd) * radius * radius;
    out.qd_inv(k, k) = 1.0 / q;
  }
  return out;
}

double true_rpi_objective(const Ellipsoid& e, const Mat& k_e, const Polytope& x_poly,
                          const Polytope& u_poly) {
  double obj = 0.0;
  for (int i = 0; i < x_poly.rows(); ++i) {
    obj += support_on_ellipsoid(x_poly.a_rows.row(i).transpose(), e) / x_poly.b[i];
  }
  const Ellipsoid ke = map_ellipsoid(k_e, e);
  for (int j = 0; j < u_poly.rows(); ++j) {
    obj += support_on_ellipsoid(u_poly.a_rows.row(j).transpose(), ke) / u_poly.b[j];
  }
  return obj;
}

}  // namespace

RpiTube synth_rpi_grid(const std::vector<Jacobians>& systems, const DisturbanceBox& w,
                       const Polytope& x_poly, const Polytope& u_poly,
                       const SynthesisOptions& opt) {
  if (systems.empty()) throw UsageError("synth_rpi_grid: no systems given");
  const int n = static_cast<int>(systems.front().a.rows());
  const int m = static_cast<int>(systems.front().b.cols());
  if (w.dim() != n) throw UsageError("synth_rpi_grid: disturbance dimension mismatch");

  if (w.is_zero()) {
    return RpiTube{Ellipsoid::zero(n), Mat::Zero(m, n), 0.0};
  }

  const DisturbanceEllipsoid dist = disturbance_ellipsoid(w, opt.disturbance_inflation);
  const int nd = static_cast<int>(dist.g.cols());
  const int n_urows = u_poly.rows();

  const SymVar s_var{0, n};
  const MatVar y_var{s_var.count(), m, n};
  const int eps_off = y_var.offset + y_var.count();  // input-row epigraphs
  const int nvars = eps_off + n_urows;

  // Linear objective: sum_i (a_i' S a_i)/b_i^2 + sum_j eps_j/b_j^2 (squared
  // support surrogate; the sum-of-square-roots objective is not convex in S,
  // the per-row epigraphs still bound the true supports).
  Vec cost = Vec::Zero(nvars);
  for (int i = 0; i < x_poly.rows(); ++i) {
    const Vec a = x_poly.a_rows.row(i).transpose();
    const double w_i = 1.0 / (x_poly.b[i] * x_poly.b[i]);
    s_var.for_each([&](int idx, const Mat& basis) {
      const double coef = a.dot(basis * a);
      if (coef != 0.0) cost[idx] += w_i * coef;
    });
  }
  for (int j = 0; j < n_urows; ++j) {
    cost[eps_off + j] += 1.0 / (u_poly.b[j] * u_poly.b[j]);
  }

  std::optional<Vec> warm;
  std::optional<RpiTube> best;
  double best_obj = 0.0;
  int worst_block_seen = -1;

  for (int gp = 1; gp <= opt.lambda_grid_points; ++gp) {
    const double lambda =
        static_cast<double>(gp) / static_cast<double>(opt.lambda_grid_points + 1);

    sdp::Problem prob(nvars);
    prob.set_cost(cost);

    // S >= 0 (strict interior enforced by the barrier).
    {
      sdp::LmiBlock blk;
      blk.f0 = Mat::Zero(n, n);
      s_var.for_each([&](int idx, const Mat& basis) { blk.coeffs.emplace_back(idx, basis); });
      prob.add_block(std::move(blk));
    }

    // Invariance with the S-procedure multipliers (lambda, 1 - lambda):
    // [[lambda S, 0, (A S + B Y)'], [0, (1-lambda) Qd^{-1}, G'],
    //  [A S + B Y, G, S]] >= 0, one block per gridded linearisation.
    for (const auto& sys : systems) {
      const int dim = 2 * n + nd;
      sdp::LmiBlock blk;
      blk.f0 = Mat::Zero(dim, dim);
      blk.f0.block(n, n, nd, nd) = (1.0 - lambda) * dist.qd_inv;
      blk.f0.block(n + nd, n, n, nd) = dist.g;
      blk.f0.block(n, n + nd, nd, n) = dist.g.transpose();
      s_var.for_each([&](int idx, const Mat& basis) {
        Mat fi = Mat::Zero(dim, dim);
        fi.block(0, 0, n, n) = lambda * basis;
        fi.block(n + nd, n + nd, n, n) = basis;
        const Mat as = sys.a * basis;
        fi.block(n + nd, 0, n, n) += as;
        fi.block(0, n + nd, n, n) += as.transpose();
        blk.coeffs.emplace_back(idx, fi);
      });
      for (int r = 0; r < m; ++r) {
        for (int c = 0; c < n; ++c) {
          Mat fi = Mat::Zero(dim, dim);
          const Vec bcol = sys.b.col(r);
          // d(A S + B Y)/dY_rc places b_col at column c.
          fi.block(n + nd, 0, n, n).col(c) += bcol;
          fi.block(0, n + nd, n, n).row(c) += bcol.transpose();
          blk.coeffs.emplace_back(y_var.index(r, c), fi);
        }
      }
      prob.add_block(std::move(blk));
    }

    // Input epigraphs: [[eps_j, a_j' Y], [Y' a_j, S]] >= 0.
    for (int j = 0; j < n_urows; ++j) {
      const Vec aj = u_poly.a_rows.row(j).transpose();
      sdp::LmiBlock blk;
      blk.f0 = Mat::Zero(1 + n, 1 + n);
      {
        Mat fi = Mat::Zero(1 + n, 1 + n);
        fi(0, 0) = 1.0;
        blk.coeffs.emplace_back(eps_off + j, fi);
      }
      s_var.for_each([&](int idx, const Mat& basis) {
        Mat fi = Mat::Zero(1 + n, 1 + n);
        fi.block(1, 1, n, n) = basis;
        blk.coeffs.emplace_back(idx, fi);
      });
      for (int r = 0; r < m; ++r) {
        for (int c = 0; c < n; ++c) {
          Mat fi = Mat::Zero(1 + n, 1 + n);
          fi(0, 1 + c) = aj[r];
          fi(1 + c, 0) = aj[r];
          blk.coeffs.emplace_back(y_var.index(r, c), fi);
        }
      }
      prob.add_block(std::move(blk));
    }

    const auto res = prob.solve({}, warm ? &*warm : nullptr);
    if (res.status != sdp::Status::optimal) {
      worst_block_seen = res.worst_block;
      continue;
    }
    warm = res.x;

    const Mat s = s_var.unpack(res.x);
    Eigen::LDLT<Mat> ldlt(s);
    if (ldlt.info() != Eigen::Success) continue;
    const Mat y = y_var.unpack(res.x);
    const Mat k_e = ldlt.solve(y.transpose()).transpose();  // K = Y S^{-1}

    const Ellipsoid e{s};
    const double obj = true_rpi_objective(e, k_e, x_poly, u_poly);
    if (!best || obj < best_obj) {
      best = RpiTube{e, k_e, lambda};
      best_obj = obj;
    }
  }

  if (!best) {
    std::ostringstream msg;
    msg << "RPI synthesis infeasible at every lambda grid point";
    if (worst_block_seen >= 0) msg << " (most violated LMI block " << worst_block_seen << ")";
    throw SynthesisError(msg.str());
  }
  return *best;
}

RpiTube synth_rpi(const Mat& a, const Mat& b, const DisturbanceBox& w,
                  const Polytope& x_poly, const Polytope& u_poly,
                  const SynthesisOptions& opt) {
  return synth_rpi_grid({Jacobians{a, b}}, w, x_poly, u_poly, opt);
}

namespace {

TerminalCbf terminal_from_sdp(const std::vector<Jacobians>& systems, const Polytope& x_tight,
                              const Polytope& u_tight, double rho_bar,
                              const SynthesisOptions& opt) {
  const int n = static_cast<int>(systems.front().a.rows());
  const int m = static_cast<int>(systems.front().b.cols());

  for (int i = 0; i < x_tight.rows(); ++i) {
    if (x_tight.b[i] <= 0.0)
      throw SynthesisError("terminal synthesis: tightened state set is empty (row " +
                           std::to_string(i) + ")");
  }
  for (int j = 0; j < u_tight.rows(); ++j) {
    if (u_tight.b[j] <= 0.0)
      throw SynthesisError("terminal synthesis: tightened input set is empty (row " +
                           std::to_string(j) + ")");
  }

  const SymVar e_var{0, n};
  const MatVar y_var{e_var.count(), m, n};
  const int nvars = y_var.offset + y_var.count();

  sdp::Problem prob(nvars);

  // E >= 0, volume objective.
  int det_block = -1;
  {
    sdp::LmiBlock blk;
    blk.f0 = Mat::Zero(n, n);
    e_var.for_each([&](int idx, const Mat& basis) { blk.coeffs.emplace_back(idx, basis); });
    det_block = prob.add_block(std::move(blk));
  }

  // Invariance: [[rho_bar E, (A E + B Y)'], [A E + B Y, E]] >= 0 per grid point.
  for (const auto& sys : systems) {
    sdp::LmiBlock blk;
    blk.f0 = Mat::Zero(2 * n, 2 * n);
    e_var.for_each([&](int idx, const Mat& basis) {
      Mat fi = Mat::Zero(2 * n, 2 * n);
      fi.block(0, 0, n, n) = rho_bar * basis;
      fi.block(n, n, n, n) = basis;
      const Mat ae = sys.a * basis;
      fi.block(n, 0, n, n) += ae;
      fi.block(0, n, n, n) += ae.transpose();
      blk.coeffs.emplace_back(idx, fi);
    });
    for (int r = 0; r < m; ++r) {
      for (int c = 0; c < n; ++c) {
        Mat fi = Mat::Zero(2 * n, 2 * n);
        fi.block(n, 0, n, n).col(c) += sys.b.col(r);
        fi.block(0, n, n, n).row(c) += sys.b.col(r).transpose();
        blk.coeffs.emplace_back(y_var.index(r, c), fi);
      }
    }
    prob.add_block(std::move(blk));
  }

  // State inclusion: [[b_i^2, a_i' E], [E a_i, E]] >= 0.
  for (int i = 0; i < x_tight.rows(); ++i) {
    const Vec ai = x_tight.a_rows.row(i).transpose();
    sdp::LmiBlock blk;
    blk.f0 = Mat::Zero(1 + n, 1 + n);
    blk.f0(0, 0) = x_tight.b[i] * x_tight.b[i];
    e_var.for_each([&](int idx, const Mat& basis) {
      Mat fi = Mat::Zero(1 + n, 1 + n);
      fi.block(1, 1, n, n) = basis;
      const Vec ea = basis * ai;
      fi.block(1, 0, n, 1) += ea;
      fi.block(0, 1, 1, n) += ea.transpose();
      blk.coeffs.emplace_back(idx, fi);
    });
    prob.add_block(std::move(blk));
  }

  // Input inclusion: [[b_j^2, a_j' Y], [Y' a_j, E]] >= 0.
  for (int j = 0; j < u_tight.rows(); ++j) {
    const Vec aj = u_tight.a_rows.row(j).transpose();
    sdp::LmiBlock blk;
    blk.f0 = Mat::Zero(1 + n, 1 + n);
    blk.f0(0, 0) = u_tight.b[j] * u_tight.b[j];
    e_var.for_each([&](int idx, const Mat& basis) {
      Mat fi = Mat::Zero(1 + n, 1 + n);
      fi.block(1, 1, n, n) = basis;
      blk.coeffs.emplace_back(idx, fi);
    });
    for (int r = 0; r < m; ++r) {
      for (int c = 0; c < n; ++c) {
        Mat fi = Mat::Zero(1 + n, 1 + n);
        fi(0, 1 + c) += aj[r];
        fi(1 + c, 0) += aj[r];
        blk.coeffs.emplace_back(y_var.index(r, c), fi);
      }
    }
    prob.add_block(std::move(blk));
  }

  prob.set_logdet_block(det_block);

  sdp::Options sopt;
  const auto res = prob.solve(sopt);
  if (res.status != sdp::Status::optimal) {
    std::ostringstream msg;
    msg << "terminal CBF SDP failed";
    if (res.status == sdp::Status::infeasible) {
      msg << ": infeasible, binding constraint family = block " << res.worst_block;
    } else {
      msg << ": " << res.message;
    }
    throw SynthesisError(msg.str());
  }

  const Mat e = e_var.unpack(res.x);
  const Mat y = y_var.unpack(res.x);
  Eigen::LDLT<Mat> ldlt(e);
  if (ldlt.info() != Eigen::Success)
    throw SynthesisError("terminal CBF SDP returned a non-PD ellipsoid");
  TerminalCbf cbf;
  cbf.p = ldlt.solve(Mat::Identity(n, n));
  cbf.p = 0.5 * (cbf.p + cbf.p.transpose());
  cbf.k_f = ldlt.solve(y.transpose()).transpose();  // K = Y E^{-1}

  double rho = 0.0;
  for (const auto& sys : systems) {
    const Mat acl = sys.a + sys.b * cbf.k_f;
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> gev(
        Mat(acl.transpose() * cbf.p * acl), cbf.p, Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
    rho = std::max(rho, gev.eigenvalues().maxCoeff());
  }
  cbf.rho = rho;
  (void)opt;
  return cbf;
}

}  // namespace

TerminalCbf synth_terminal_cbf_grid(const std::vector<Jacobians>& systems,
                                    const Polytope& x_tight, const Polytope& u_tight,
                                    const SynthesisOptions& opt) {
  if (systems.empty()) throw UsageError("synth_terminal_cbf_grid: no systems given");
  TerminalCbf cbf = terminal_from_sdp(systems, x_tight, u_tight, 1.0, opt);
  if (cbf.rho > opt.contraction_max) {
    // The volume-optimal solution is only marginally contractive; trade a
    // little volume for a strict decrease margin.
    cbf = terminal_from_sdp(systems, x_tight, u_tight, opt.contraction_max, opt);
    if (cbf.rho > opt.contraction_max + 1e-6)
      throw SynthesisError("terminal CBF: contraction factor " +
                           format_double(cbf.rho) + " exceeds requested bound");
  }
  return cbf;
}

TerminalCbf synth_terminal_cbf(const Mat& a, const Mat& b, const Polytope& x_tight,
                               const Polytope& u_tight, const SynthesisOptions& opt) {
  return synth_terminal_cbf_grid({Jacobians{a, b}}, x_tight, u_tight, opt);
}

double compute_gamma_f(TerminalCbf& cbf, const Polytope& x_tight, const Polytope& u_tight,
                       const SynthesisOptions& opt) {
  const int n = static_cast<int>(cbf.p.rows());
  for (int rescale = 0; rescale < 40; ++rescale) {
    const Mat e = cbf.p.inverse();
    double gamma = std::numeric_limits<double>::infinity();
    for (int i = 0; i < x_tight.rows(); ++i) {
      const Vec a = x_tight.a_rows.row(i).transpose();
      const double denom = a.dot(e * a);
      gamma = std::min(gamma, x_tight.b[i] * x_tight.b[i] / denom - 1.0);
    }
    for (int j = 0; j < u_tight.rows(); ++j) {
      const Vec a = cbf.k_f.transpose() * u_tight.a_rows.row(j).transpose();
      const double denom = a.dot(e * a);
      if (denom <= 0.0) continue;  // row insensitive to the policy
      gamma = std::min(gamma, u_tight.b[j] * u_tight.b[j] / denom - 1.0);
    }
    if (gamma > opt.gamma_floor) {
      cbf.gamma_f = gamma;
      return gamma;
    }
    if (gamma < -0.5) {
      // A genuinely violated row: shrinking by 0.99 steps will not recover.
      throw SynthesisError("compute_gamma_f: terminal set exceeds constraints (gamma " +
                           format_double(gamma) + ")");
    }
    cbf.p /= 0.99;  // shrink S_f by factor 0.99
  }
  (void)n;
  throw SynthesisError("compute_gamma_f: could not achieve gamma_f > 0 (terminal set touches constraints)");
}

std::string VerifyReport::summary() const {
  std::ostringstream ss;
  ss << violations << "/" << samples << " violations"
     << ", worst invariance " << format_double(worst_invariance)
     << ", worst decrease shortfall " << format_double(worst_decrease)
     << ", worst input residual " << format_double(worst_input);
  return ss.str();
}

VerifyReport verify_terminal(const TerminalCbf& cbf, const SystemModel& model,
                             const Polytope& u_tight, int n_samples, std::uint64_t seed) {
  const int n = static_cast<int>(cbf.p.rows());
  Rng rng(seed);
  Eigen::LLT<Mat> llt(cbf.p.inverse());
  if (llt.info() != Eigen::Success)
    throw UsageError("verify_terminal: P is not positive definite");
  const Mat l = llt.matrixL();
  const double radius = std::sqrt(1.0 + cbf.gamma_f);
  const double tol = 1e-7;

  VerifyReport rep;
  rep.samples = n_samples;
  for (int it = 0; it < n_samples; ++it) {
    Vec u = rng.gauss_vec(n);
    u *= std::pow(rng.uniform(), 1.0 / n) / u.norm();
    const Vec z = radius * (l * u);

    const double h = cbf.h_f(z);
    const Vec v = cbf.policy(z);
    const Vec z_next = model.step_nominal(z, v);
    const double h_next = cbf.h_f(z_next);

    bool bad = false;
    if (h <= 0.0) {
      rep.worst_invariance = std::max(rep.worst_invariance, h_next);
      if (h_next > tol) bad = true;
    } else {
      const double shortfall = (h_next - h) + cbf.decrease_margin(z);
      rep.worst_decrease = std::max(rep.worst_decrease, shortfall);
      if (shortfall > tol) bad = true;
    }
    const double input_res = u_tight.residual(v).maxCoeff();
    rep.worst_input = std::max(rep.worst_input, input_res);
    if (input_res > 1e-9 * (1.0 + u_tight.b.cwiseAbs().maxCoeff())) bad = true;

    if (bad) {
      ++rep.violations;
      if (rep.witness.size() == 0) rep.witness = z;
    }
  }
  return rep;
}

bool verify_sf_containment(const TerminalCbf& cbf, const Polytope& x_tight) {
  const Mat e = cbf.p.inverse();
  for (int i = 0; i < x_tight.rows(); ++i) {
    const Vec a = x_tight.a_rows.row(i).transpose();
    const double sup = std::sqrt(std::max(0.0, a.dot(e * a)));
    if (sup > x_tight.b[i] + 1e-9) return false;
  }
  return true;
}

VerifyReport verify_rpi(const RpiTube& tube, const SystemModel& model, const Vec& z_lo,
                        const Vec& z_hi, const Vec& v_lo, const Vec& v_hi,
                        const DisturbanceBox& w, int n_samples, std::uint64_t seed) {
  Rng rng(seed);
  const int n = model.n_x;
  VerifyReport rep;
  rep.samples = n_samples;
  if (tube.degenerate()) return rep;

  Eigen::LLT<Mat> llt(tube.e.shape);
  if (llt.info() != Eigen::Success) throw UsageError("verify_rpi: tube shape not PD");
  const Mat l = llt.matrixL();

  for (int it = 0; it < n_samples; ++it) {
    Vec u = rng.gauss_vec(n);
    u /= u.norm();  // boundary errors stress the invariance the most
    const Vec e = l * u;
    const Vec z = rng.uniform_box(z_lo, z_hi);
    const Vec v = rng.uniform_box(v_lo, v_hi);
    Vec wk(w.dim());
    for (Eigen::Index i = 0; i < wk.size(); ++i) {
      wk[i] = rng.uniform() < 0.5 ? w.lower[i] : w.upper[i];
    }
    const Vec e_next = model.step(z + e, v + tube.k_e * e, wk) - model.step_nominal(z, v);
    if (!contains(tube.e, e_next, 1e-9)) {
      ++rep.violations;
      if (rep.witness.size() == 0) rep.witness = e_next;
    }
  }
  return rep;
}

}  // namespace pcbf
