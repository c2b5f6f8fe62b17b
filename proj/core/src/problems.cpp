#include "pcbf/problems.hpp"

#include "pcbf/errors.hpp"
#include "pcbf/qcqp.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <optional>
#include <sstream>

namespace pcbf {

namespace {

constexpr double kSqpStepTol = 1e-6;
constexpr int kSqpMaxIter = 30;
constexpr double kTrustRadius = 0.5;

Mat rollout(const SystemModel& model, const Vec& z0, const Mat& v) {
  const int n = model.n_x;
  const int nsteps = static_cast<int>(v.cols());
  Mat z(n, nsteps + 1);
  z.col(0) = z0;
  for (int i = 0; i < nsteps; ++i) {
    z.col(i + 1) = model.step_nominal(z.col(i), v.col(i));
  }
  return z;
}

SlackSequence min_slacks(const PcbfProblemSpec& spec, const Mat& z) {
  const int n_rows = spec.n_rows();
  const int big_n = spec.horizon;
  SlackSequence xi = SlackSequence::zeros(n_rows, big_n);
  for (int i = 0; i < big_n; ++i) {
    xi.stage.col(i) = spec.x_tight[static_cast<size_t>(i)]
                          .residual(z.col(i))
                          .cwiseMax(0.0);
  }
  xi.terminal = std::max(0.0, spec.cbf.h_f(z.col(big_n)));
  return xi;
}

}  // namespace

ObjectiveSpec ObjectiveSpec::tracking(Mat q, Mat r, Vec z_ref) {
  ObjectiveSpec o;
  o.kind = Kind::quadratic_tracking;
  o.q = std::move(q);
  o.r = std::move(r);
  o.z_ref = std::move(z_ref);
  return o;
}

Vec PcbfProblemSpec::cbar(const Vec& z) const {
  return x_poly.residual(z) + e_support;
}

PcbfProblemSpec make_problem_spec(SystemModel model, int horizon, Polytope x_poly,
                                  Polytope u_poly, RpiTube tube, TerminalCbf cbf,
                                  PaddingSchedule pad, double alpha_f) {
  if (horizon < 1) throw UsageError("make_problem_spec: horizon must be >= 1");
  if (alpha_f <= 0.0) throw UsageError("make_problem_spec: alpha_f must be > 0");
  if (pad.horizon() != horizon)
    throw UsageError("make_problem_spec: padding schedule length must equal horizon");
  if (x_poly.dim() != model.n_x || u_poly.dim() != model.n_u)
    throw UsageError("make_problem_spec: polytope dimensions do not match model");

  PcbfProblemSpec spec;
  spec.model = std::move(model);
  spec.horizon = horizon;
  spec.x_poly = std::move(x_poly);
  spec.u_poly = std::move(u_poly);
  spec.tube = std::move(tube);
  spec.cbf = std::move(cbf);
  spec.pad = std::move(pad);
  spec.alpha_f = alpha_f;

  spec.tube_degenerate = spec.tube.degenerate();
  if (!spec.tube_degenerate) {
    Eigen::LLT<Mat> llt(spec.tube.e.shape);
    if (llt.info() != Eigen::Success)
      throw UsageError("make_problem_spec: tube shape must be PD or exactly zero");
    spec.s_inv = llt.solve(Mat::Identity(spec.model.n_x, spec.model.n_x));
    spec.s_inv = 0.5 * (spec.s_inv + spec.s_inv.transpose());
  }

  const Ellipsoid kappa_e = map_ellipsoid(spec.tube.k_e, spec.tube.e);
  spec.u_tight = tighten(spec.u_poly, kappa_e, 0.0);
  if ((spec.u_tight.b.array() < 0.0).any())
    throw UsageError("make_problem_spec: tightened input set does not contain 0");

  spec.e_support = Vec(spec.x_poly.rows());
  for (int i = 0; i < spec.x_poly.rows(); ++i) {
    spec.e_support[i] =
        support_on_ellipsoid(spec.x_poly.a_rows.row(i).transpose(), spec.tube.e);
  }
  spec.x_tight.clear();
  for (int i = 0; i < horizon; ++i) {
    spec.x_tight.push_back(tighten(spec.x_poly, spec.tube.e, spec.pad.at(i)));
  }

  if (!verify_sf_containment(spec.cbf, spec.x_tight.back()))
    throw UsageError("make_problem_spec: S_f not contained in the tightened state set");
  return spec;
}

double htilde(const SlackSequence& xi, double alpha_f) {
  return alpha_f * xi.terminal + xi.stage.cwiseAbs().sum();
}

std::pair<double, Vec> eval_terminal(const TerminalCbf& cbf, const Vec& z) {
  return {cbf.h_f(z), cbf.policy(z)};
}

WarmstartState warmstart_shift(const PcbfProblemSpec& spec, const PcbfSolution& sol) {
  const int n = spec.n_x();
  const int m = spec.n_u();
  const int big_n = spec.horizon;
  const int r = spec.n_rows();

  WarmstartState ws;
  ws.xi_prev_opt = sol.xi;
  ws.z_warm.resize(n, big_n + 1);
  ws.v_warm.resize(m, big_n);

  for (int i = 0; i + 1 < big_n; ++i) ws.v_warm.col(i) = sol.v.col(i + 1);
  Vec v_term = spec.cbf.policy(sol.z.col(big_n));
  // Clamp into the tightened input box so the shifted sequence stays
  // admissible even when z_N escaped D_f (cannot happen inside the domain,
  // where gamma_f guarantees admissibility).
  for (int j = 0; j < spec.u_tight.rows(); ++j) {
    const Vec a = spec.u_tight.a_rows.row(j).transpose();
    const double res = a.dot(v_term) - spec.u_tight.b[j];
    if (res > 0.0) v_term -= res * a / a.squaredNorm();
  }
  ws.v_warm.col(big_n - 1) = v_term;

  for (int i = 0; i < big_n; ++i) ws.z_warm.col(i) = sol.z.col(i + 1);
  ws.z_warm.col(big_n) = spec.model.step_nominal(sol.z.col(big_n), v_term);

  ws.xi_warm = SlackSequence::zeros(r, big_n);
  for (int i = 0; i + 1 < big_n; ++i) {
    const double gap = spec.pad.at(i) - spec.pad.at(i + 1);
    ws.xi_warm.stage.col(i) =
        (sol.xi.stage.col(i + 1).array() + gap).cwiseMax(0.0).matrix();
  }
  {
    // Row N-1 from the E-tightened constraint function of the old terminal
    // state (constraint (5e) carries the tube tightening, so the raw c_x row
    // would under-slack).
    const Vec cb = spec.cbar(sol.z.col(big_n));
    ws.xi_warm.stage.col(big_n - 1) =
        (cb.array() + spec.pad.at(big_n - 1)).cwiseMax(0.0).matrix();
  }
  ws.xi_warm.terminal = std::max(0.0, spec.cbf.h_f(ws.z_warm.col(big_n)));
  return ws;
}

double decrease(const SlackSequence& xi_prev, const SlackSequence& xi_warm,
                double alpha_f) {
  const double h_prev = htilde(xi_prev, alpha_f);
  const double h_warm = htilde(xi_warm, alpha_f);
  const double d = h_prev - h_warm;
  if (d < -1e-9 * (1.0 + std::abs(h_prev)))
    throw InvariantError("decrease: warmstart increased the barrier value by " +
                         format_double(-d));
  return d;
}

// ---------------------------------------------------------------------------
// Problem construction
// ---------------------------------------------------------------------------

namespace {

enum class Kind { slack_min, objective, multi };

struct Layout {
  int n = 0, m = 0, r = 0, big_n = 0;
  bool with_slacks = false;
  int stride = 0;
  int aux_off = 0, aux_count = 0;
  int total = 0;

  int iz(int i) const { return i < big_n ? i * stride : big_n * stride; }
  int iv(int i) const { return i * stride + n; }
  int ixi(int i, int row) const { return i * stride + n + m + row; }
  int ixi_n() const { return big_n * stride + n; }
};

struct Built {
  Layout lay;
  std::unique_ptr<qcqp::Solver> solver;
  Kind kind = Kind::slack_min;

  std::vector<int> dyn_tri_start;  // per stage, into problem().a_eq
  int z0_eq_off = -1;              // into b_eq
  int state_row_off = 0;
  int slack_row_off = -1;
  int input_row_off = 0;
  int budget_row = -1;
  int fuel_row_off = -1;
  int filter_row_off = -1;
  int trust_row_off = -1;
  int tube_quad = -1;
  int term_quad = -1;
  double obj_constant = 0.0;
};

Built build_problem(const PcbfProblemSpec& spec, Kind kind, const ObjectiveSpec& objective) {
  Built bp;
  bp.kind = kind;
  Layout& L = bp.lay;
  L.n = spec.n_x();
  L.m = spec.n_u();
  L.r = spec.n_rows();
  L.big_n = spec.horizon;
  L.with_slacks = kind != Kind::objective;
  L.stride = L.n + L.m + (L.with_slacks ? L.r : 0);

  const bool want_cost = kind != Kind::slack_min;
  int aux = 0;
  if (want_cost) {
    if (objective.kind == ObjectiveSpec::Kind::fuel) aux = L.m * L.big_n;
    if (objective.kind == ObjectiveSpec::Kind::filter) aux = L.m;
  }
  L.aux_off = L.big_n * L.stride + L.n + (L.with_slacks ? 1 : 0);
  L.aux_count = aux;
  L.total = L.aux_off + aux;

  const bool nonlinear = !spec.model.is_linear;

  qcqp::Problem prob;
  prob.n = L.total;
  prob.g = Vec::Zero(L.total);

  // --- equalities: dynamics, then z0 = x for the degenerate tube ---
  const Jacobians jac0 = spec.model.is_linear
                             ? Jacobians{spec.model.a, spec.model.b}
                             : spec.model.jacobians(Vec::Zero(L.n), Vec::Zero(L.m));
  prob.n_eq = L.n * L.big_n + (spec.tube_degenerate ? L.n : 0);
  prob.b_eq = Vec::Zero(prob.n_eq);
  for (int i = 0; i < L.big_n; ++i) {
    bp.dyn_tri_start.push_back(static_cast<int>(prob.a_eq.size()));
    const int row0 = i * L.n;
    for (int k = 0; k < L.n; ++k) {
      prob.a_eq.push_back({row0 + k, L.iz(i + 1) + k, 1.0});
    }
    for (int rr = 0; rr < L.n; ++rr)
      for (int cc = 0; cc < L.n; ++cc)
        prob.a_eq.push_back({row0 + rr, L.iz(i) + cc, -jac0.a(rr, cc)});
    for (int rr = 0; rr < L.n; ++rr)
      for (int cc = 0; cc < L.m; ++cc)
        prob.a_eq.push_back({row0 + rr, L.iv(i) + cc, -jac0.b(rr, cc)});
  }
  if (spec.tube_degenerate) {
    bp.z0_eq_off = L.n * L.big_n;
    for (int k = 0; k < L.n; ++k) {
      prob.a_eq.push_back({bp.z0_eq_off + k, k, 1.0});
    }
  }

  // --- linear inequalities ---
  int row = 0;
  bp.state_row_off = row;
  for (int i = 0; i < L.big_n; ++i) {
    const Polytope& xt = spec.x_tight[static_cast<size_t>(i)];
    for (int rr = 0; rr < L.r; ++rr) {
      for (int cc = 0; cc < L.n; ++cc) {
        const double a = xt.a_rows(rr, cc);
        if (a != 0.0) prob.c_in.push_back({row, L.iz(i) + cc, a});
      }
      if (L.with_slacks) prob.c_in.push_back({row, L.ixi(i, rr), -1.0});
      ++row;
    }
  }
  if (L.with_slacks) {
    bp.slack_row_off = row;
    for (int i = 0; i < L.big_n; ++i) {
      for (int rr = 0; rr < L.r; ++rr) {
        prob.c_in.push_back({row, L.ixi(i, rr), -1.0});
        ++row;
      }
    }
    prob.c_in.push_back({row, L.ixi_n(), -1.0});
    ++row;
  }
  bp.input_row_off = row;
  for (int i = 0; i < L.big_n; ++i) {
    for (int rr = 0; rr < spec.u_tight.rows(); ++rr) {
      for (int cc = 0; cc < L.m; ++cc) {
        const double a = spec.u_tight.a_rows(rr, cc);
        if (a != 0.0) prob.c_in.push_back({row, L.iv(i) + cc, a});
      }
      ++row;
    }
  }
  if (kind == Kind::multi) {
    bp.budget_row = row;
    for (int i = 0; i < L.big_n; ++i)
      for (int rr = 0; rr < L.r; ++rr) prob.c_in.push_back({row, L.ixi(i, rr), 1.0});
    prob.c_in.push_back({row, L.ixi_n(), 1.0});
    ++row;
  }
  if (want_cost && objective.kind == ObjectiveSpec::Kind::fuel) {
    bp.fuel_row_off = row;
    for (int i = 0; i < L.big_n; ++i) {
      for (int j = 0; j < L.m; ++j) {
        const int t_idx = L.aux_off + i * L.m + j;
        prob.c_in.push_back({row, L.iv(i) + j, 1.0});
        prob.c_in.push_back({row, t_idx, -1.0});
        ++row;
        prob.c_in.push_back({row, L.iv(i) + j, -1.0});
        prob.c_in.push_back({row, t_idx, -1.0});
        ++row;
        prob.g[t_idx] = 1.0;
      }
    }
  }
  if (want_cost && objective.kind == ObjectiveSpec::Kind::filter) {
    bp.filter_row_off = row;
    // |v_0 + K_e (x - z_0) - p| <= s componentwise; the x- and p-dependent
    // part lands in d_in.
    for (int j = 0; j < L.m; ++j) {
      const int s_idx = L.aux_off + j;
      for (int sign = 0; sign < 2; ++sign) {
        const double sg = sign == 0 ? 1.0 : -1.0;
        prob.c_in.push_back({row, L.iv(0) + j, sg});
        for (int cc = 0; cc < L.n; ++cc) {
          const double ke = spec.tube.k_e(j, cc);
          if (ke != 0.0) prob.c_in.push_back({row, cc, -sg * ke});
        }
        prob.c_in.push_back({row, s_idx, -1.0});
        ++row;
      }
      prob.g[s_idx] = 1.0;
    }
  }
  if (nonlinear) {
    bp.trust_row_off = row;
    for (int i = 0; i <= L.big_n; ++i) {
      for (int k = 0; k < L.n; ++k) {
        prob.c_in.push_back({row, L.iz(i) + k, 1.0});
        ++row;
        prob.c_in.push_back({row, L.iz(i) + k, -1.0});
        ++row;
      }
    }
  }
  prob.n_in = row;
  prob.d_in = Vec::Zero(row);

  // Constant parts of d_in.
  for (int i = 0; i < L.big_n; ++i) {
    for (int rr = 0; rr < L.r; ++rr)
      prob.d_in[bp.state_row_off + i * L.r + rr] = spec.x_tight[static_cast<size_t>(i)].b[rr];
    for (int rr = 0; rr < spec.u_tight.rows(); ++rr)
      prob.d_in[bp.input_row_off + i * spec.u_tight.rows() + rr] = spec.u_tight.b[rr];
  }

  // --- quadratic constraints ---
  if (!spec.tube_degenerate) {
    qcqp::QuadCon tube;
    tube.support.resize(static_cast<size_t>(L.n));
    for (int k = 0; k < L.n; ++k) tube.support[static_cast<size_t>(k)] = k;
    tube.q = 2.0 * spec.s_inv;
    tube.r = Vec::Zero(L.n);
    tube.c = -1.0;
    bp.tube_quad = static_cast<int>(prob.quads.size());
    prob.quads.push_back(std::move(tube));
  }
  {
    qcqp::QuadCon term;
    if (L.with_slacks) {
      term.support.resize(static_cast<size_t>(L.n + 1));
      for (int k = 0; k < L.n; ++k) term.support[static_cast<size_t>(k)] = L.iz(L.big_n) + k;
      term.support[static_cast<size_t>(L.n)] = L.ixi_n();
      // The terminal slack variable is stored as alpha_f * xi_N so every
      // slack carries unit cost; h_f(z_N) <= xi_N becomes
      // z'Pz - 1 - xihat/alpha_f <= 0.
      term.q = Mat::Zero(L.n + 1, L.n + 1);
      term.q.topLeftCorner(L.n, L.n) = 2.0 * spec.cbf.p;
      term.r = Vec::Zero(L.n + 1);
      term.r[L.n] = -1.0 / spec.alpha_f;
      term.c = -1.0;
    } else {
      term.support.resize(static_cast<size_t>(L.n));
      for (int k = 0; k < L.n; ++k) term.support[static_cast<size_t>(k)] = L.iz(L.big_n) + k;
      term.q = 2.0 * spec.cbf.p;
      term.r = Vec::Zero(L.n);
      term.c = -1.0;  // minus xi_N, set per solve
    }
    bp.term_quad = static_cast<int>(prob.quads.size());
    prob.quads.push_back(std::move(term));
  }

  // --- objective ---
  if (kind == Kind::slack_min) {
    for (int i = 0; i < L.big_n; ++i)
      for (int rr = 0; rr < L.r; ++rr) prob.g[L.ixi(i, rr)] = 1.0;
    prob.g[L.ixi_n()] = 1.0;  // scaled terminal slack
  } else if (objective.kind == ObjectiveSpec::Kind::quadratic_tracking) {
    const Mat& q = objective.q;
    const Mat& rmat = objective.r;
    const Vec& z_ref = objective.z_ref;
    for (int i = 1; i <= L.big_n; ++i) {
      for (int a = 0; a < L.n; ++a)
        for (int b = 0; b <= a; ++b) {
          const double val = 2.0 * q(a, b);
          if (val != 0.0) prob.h.push_back({L.iz(i) + a, L.iz(i) + b, val});
        }
      const Vec gz = -2.0 * (q * z_ref);
      for (int a = 0; a < L.n; ++a) prob.g[L.iz(i) + a] += gz[a];
    }
    for (int i = 0; i < L.big_n; ++i) {
      for (int a = 0; a < L.m; ++a)
        for (int b = 0; b <= a; ++b) {
          const double val = 2.0 * rmat(a, b);
          if (val != 0.0) prob.h.push_back({L.iv(i) + a, L.iv(i) + b, val});
        }
    }
    bp.obj_constant = L.big_n * z_ref.dot(q * z_ref);
  }
  // fuel/filter costs were written onto the aux variables above.

  bp.solver = std::make_unique<qcqp::Solver>(std::move(prob));
  return bp;
}

// Per-solve parameter plumbing.

void set_tube_center(const PcbfProblemSpec& spec, Built& bp, const Vec& x) {
  if (spec.tube_degenerate) {
    bp.solver->problem().b_eq.segment(bp.z0_eq_off, spec.n_x()) = x;
  } else {
    // (x - z)'S^{-1}(x - z) <= 1 as 0.5 z'(2 S^{-1})z - 2(S^{-1}x)'z + x'S^{-1}x - 1.
    auto& tube = bp.solver->problem().quads[static_cast<size_t>(bp.tube_quad)];
    tube.r = -2.0 * (spec.s_inv * x);
    tube.c = x.dot(spec.s_inv * x) - 1.0;
  }
}

void set_dynamics(const PcbfProblemSpec& spec, Built& bp, const Mat& z_bar, const Mat& v_bar) {
  auto& prob = bp.solver->problem();
  const Layout& L = bp.lay;
  for (int i = 0; i < L.big_n; ++i) {
    const Jacobians jac = spec.model.jacobians(z_bar.col(i), v_bar.col(i));
    const Vec defect = spec.model.step_nominal(z_bar.col(i), v_bar.col(i)) -
                       jac.a * z_bar.col(i) - jac.b * v_bar.col(i);
    int t = bp.dyn_tri_start[static_cast<size_t>(i)] + L.n;  // skip identity entries
    for (int rr = 0; rr < L.n; ++rr)
      for (int cc = 0; cc < L.n; ++cc) prob.a_eq[static_cast<size_t>(t++)].value = -jac.a(rr, cc);
    for (int rr = 0; rr < L.n; ++rr)
      for (int cc = 0; cc < L.m; ++cc) prob.a_eq[static_cast<size_t>(t++)].value = -jac.b(rr, cc);
    prob.b_eq.segment(i * L.n, L.n) = defect;
  }
  if (bp.trust_row_off >= 0) {
    int row = bp.trust_row_off;
    for (int i = 0; i <= L.big_n; ++i) {
      for (int k = 0; k < L.n; ++k) {
        prob.d_in[row++] = z_bar(k, i) + kTrustRadius;
        prob.d_in[row++] = -(z_bar(k, i) - kTrustRadius);
      }
    }
  }
}

void set_filter_rows(const PcbfProblemSpec& spec, Built& bp, const Vec& x, const Vec& p) {
  if (bp.filter_row_off < 0) return;
  auto& prob = bp.solver->problem();
  const Vec kex = spec.tube.k_e * x;
  int row = bp.filter_row_off;
  for (int j = 0; j < spec.n_u(); ++j) {
    const double base = kex[j] - (p.size() > 0 ? p[j] : 0.0);
    prob.d_in[row++] = -base;  //  (v0 + Ke x - Ke z0 - p)_j <= s_j
    prob.d_in[row++] = base;   // -(...) <= s_j
  }
}

Vec pack_guess(const PcbfProblemSpec& spec, const Built& bp, const Mat& z, const Mat& v,
               const SlackSequence* xi, const ObjectiveSpec& objective, const Vec& x,
               const Vec& p) {
  const Layout& L = bp.lay;
  Vec x0 = Vec::Zero(L.total);
  for (int i = 0; i <= L.big_n; ++i) x0.segment(L.iz(i), L.n) = z.col(i);
  for (int i = 0; i < L.big_n; ++i) x0.segment(L.iv(i), L.m) = v.col(i);
  if (L.with_slacks && xi != nullptr) {
    for (int i = 0; i < L.big_n; ++i)
      for (int rr = 0; rr < L.r; ++rr) x0[L.ixi(i, rr)] = xi->stage(rr, i);
    x0[L.ixi_n()] = spec.alpha_f * xi->terminal;
  }
  if (L.aux_count > 0) {
    if (objective.kind == ObjectiveSpec::Kind::fuel) {
      for (int i = 0; i < L.big_n; ++i)
        for (int j = 0; j < L.m; ++j)
          x0[L.aux_off + i * L.m + j] = std::abs(v(j, i)) + 1e-3;
    } else if (objective.kind == ObjectiveSpec::Kind::filter) {
      const Vec u0 = v.col(0) + spec.tube.k_e * (x - z.col(0));
      for (int j = 0; j < L.m; ++j) {
        const double pj = p.size() > 0 ? p[j] : 0.0;
        x0[L.aux_off + j] = std::abs(u0[j] - pj) + 1e-3;
      }
    }
  }
  return x0;
}

struct SolveOutput {
  Mat z;
  Mat v;
  SlackSequence xi;
  double objective = 0.0;
  int iterations = 0;
};

// Solves the (possibly successively linearised) problem around the guess
// trajectory. For linear models this is a single convex solve.
SolveOutput run_sqp(const PcbfProblemSpec& spec, Built& bp, const Vec& x,
                    const ObjectiveSpec& objective, const Vec& p, Mat z_bar, Mat v_bar,
                    const SlackSequence* xi_seed, bool slacks_are_free) {
  const Layout& L = bp.lay;
  const bool nonlinear = !spec.model.is_linear;

  SolveOutput out;
  double last_obj = 0.0;
  std::ostringstream trail;

  const int max_iter = nonlinear ? kSqpMaxIter : 1;
  for (int it = 0; it < max_iter; ++it) {
    if (nonlinear || it == 0) set_dynamics(spec, bp, z_bar, v_bar);

    SlackSequence xi_guess =
        slacks_are_free ? min_slacks(spec, z_bar)
                        : (xi_seed != nullptr ? *xi_seed
                                              : SlackSequence::zeros(L.r, L.big_n));
    const Vec x0 =
        pack_guess(spec, bp, z_bar, v_bar, L.with_slacks ? &xi_guess : nullptr, objective,
                   x, p);
    const auto res = bp.solver->solve(&x0);
    if (!res.ok()) {
      std::ostringstream msg;
      msg << "solver failed (" << res.message << ", iterations " << res.iterations
          << ", primal " << format_double(res.primal_residual) << ", dual "
          << format_double(res.dual_residual) << ")";
      if (nonlinear) msg << " at SQP iteration " << it << trail.str();
      throw SolveError(msg.str());
    }

    Mat z_new(L.n, L.big_n + 1), v_new(L.m, L.big_n);
    for (int i = 0; i <= L.big_n; ++i) z_new.col(i) = res.x.segment(L.iz(i), L.n);
    for (int i = 0; i < L.big_n; ++i) v_new.col(i) = res.x.segment(L.iv(i), L.m);

    double step = 0.0;
    step = std::max(step, (z_new - z_bar).cwiseAbs().maxCoeff());
    step = std::max(step, (v_new - v_bar).cwiseAbs().maxCoeff());
    const double scale = 1.0 + z_new.cwiseAbs().maxCoeff() + v_new.cwiseAbs().maxCoeff();

    // Project back onto the true dynamics manifold.
    z_bar = rollout(spec.model, z_new.col(0), v_new);
    v_bar = v_new;
    if (nonlinear) {
      trail << " | it " << it << " step " << format_double(step) << " obj "
            << format_double(res.objective);
    }

    out.z = z_bar;
    out.v = v_bar;
    out.objective = res.objective;
    out.iterations += std::max(res.iterations, 1);
    if (L.with_slacks) {
      out.xi = SlackSequence::zeros(L.r, L.big_n);
      for (int i = 0; i < L.big_n; ++i)
        for (int rr = 0; rr < L.r; ++rr)
          out.xi.stage(rr, i) = std::max(0.0, res.x[L.ixi(i, rr)]);
      out.xi.terminal = std::max(0.0, res.x[L.ixi_n()] / spec.alpha_f);
    }

    if (!nonlinear) return out;
    if (step <= kSqpStepTol * scale) return out;
    last_obj = res.objective;
  }
  (void)last_obj;
  throw SolveError("SQP did not converge within " + std::to_string(kSqpMaxIter) +
                   " iterations" + trail.str());
}

Mat default_guess_v(const PcbfProblemSpec& spec) {
  return Mat::Zero(spec.n_u(), spec.horizon);
}

}  // namespace

// ---------------------------------------------------------------------------
// ProblemBank
// ---------------------------------------------------------------------------

struct ProblemBank::Impl {
  PcbfProblemSpec spec;
  ObjectiveSpec objective;
  std::unique_ptr<Built> slack_min;
  std::unique_ptr<Built> objective_prob;
  std::unique_ptr<Built> multi;

  Built& get(Kind kind) {
    auto& slot = kind == Kind::slack_min ? slack_min
                 : kind == Kind::objective ? objective_prob
                                           : multi;
    if (!slot) slot = std::make_unique<Built>(build_problem(spec, kind, objective));
    return *slot;
  }
};

ProblemBank::ProblemBank(PcbfProblemSpec spec, ObjectiveSpec objective)
    : impl_(std::make_unique<Impl>()) {
  impl_->spec = std::move(spec);
  impl_->objective = std::move(objective);
}

ProblemBank::~ProblemBank() = default;
ProblemBank::ProblemBank(ProblemBank&&) noexcept = default;
ProblemBank& ProblemBank::operator=(ProblemBank&&) noexcept = default;

const PcbfProblemSpec& ProblemBank::spec() const { return impl_->spec; }

PcbfSolution ProblemBank::solve_slack_min(const Vec& x, const TrajectoryGuess* guess) {
  const auto t0 = std::chrono::steady_clock::now();
  const PcbfProblemSpec& spec = impl_->spec;
  Built& bp = impl_->get(Kind::slack_min);

  set_tube_center(spec, bp, x);

  Mat v_bar = guess != nullptr ? guess->v : default_guess_v(spec);
  Mat z_bar = guess != nullptr ? rollout(spec.model, guess->z.col(0), v_bar)
                               : rollout(spec.model, x, v_bar);
  auto out = run_sqp(spec, bp, x, impl_->objective, Vec(), std::move(z_bar),
                     std::move(v_bar), nullptr, /*slacks_are_free=*/true);

  PcbfSolution sol;
  sol.z = std::move(out.z);
  sol.v = std::move(out.v);
  sol.xi = std::move(out.xi);
  sol.objective = out.objective;
  sol.h_value = std::max(0.0, out.objective);
  sol.iterations = out.iterations;
  sol.solve_ms = std::chrono::duration<double, std::milli>(
                     std::chrono::steady_clock::now() - t0)
                     .count();
  return sol;
}

PcbfSolution ProblemBank::solve_objective(const Vec& x, const SlackSequence& xi_fixed,
                                          const Vec& p, const PcbfSolution* guess) {
  const auto t0 = std::chrono::steady_clock::now();
  const PcbfProblemSpec& spec = impl_->spec;
  Built& bp = impl_->get(Kind::objective);
  const Layout& L = bp.lay;

  set_tube_center(spec, bp, x);
  set_filter_rows(spec, bp, x, p);

  // Slacks enter as constants: state rows and the terminal cap. A pad at
  // the solver feasibility tolerance keeps an interior when the slack-min
  // argmin sits at a tangential tube/row intersection.
  auto& prob = bp.solver->problem();
  for (int i = 0; i < L.big_n; ++i)
    for (int rr = 0; rr < L.r; ++rr) {
      const double b = spec.x_tight[static_cast<size_t>(i)].b[rr];
      prob.d_in[bp.state_row_off + i * L.r + rr] =
          b + xi_fixed.stage(rr, i) + 1e-9 * (1.0 + std::abs(b));
    }
  prob.quads[static_cast<size_t>(bp.term_quad)].c =
      -1.0 - xi_fixed.terminal - 2e-9;

  Mat v_bar = guess != nullptr ? guess->v : default_guess_v(spec);
  Mat z_bar = guess != nullptr ? guess->z : rollout(spec.model, x, v_bar);
  z_bar = rollout(spec.model, z_bar.col(0), v_bar);

  SolveOutput out;
  try {
    out = run_sqp(spec, bp, x, impl_->objective, p, std::move(z_bar), std::move(v_bar),
                  &xi_fixed, /*slacks_are_free=*/false);
  } catch (const SolveError& err) {
    // Infeasibility here means the fixed slacks do not belong to this state.
    throw InvariantError(std::string("solve_objective: ") + err.what());
  }

  PcbfSolution sol;
  sol.z = std::move(out.z);
  sol.v = std::move(out.v);
  sol.xi = xi_fixed;
  sol.objective = out.objective + bp.obj_constant;
  sol.h_value = htilde(xi_fixed, spec.alpha_f);
  sol.iterations = out.iterations;
  sol.solve_ms = std::chrono::duration<double, std::milli>(
                     std::chrono::steady_clock::now() - t0)
                     .count();
  return sol;
}

PcbfSolution ProblemBank::solve_multiobjective(const Vec& x, const WarmstartState& ws,
                                               double c_alpha, const Vec& p) {
  const auto t0 = std::chrono::steady_clock::now();
  const PcbfProblemSpec& spec = impl_->spec;
  if (c_alpha < 0.0 || c_alpha >= 1.0)
    throw UsageError("solve_multiobjective: c_alpha must lie in [0, 1)");
  Built& bp = impl_->get(Kind::multi);

  set_tube_center(spec, bp, x);
  set_filter_rows(spec, bp, x, p);

  const double h_warm = htilde(ws.xi_warm, spec.alpha_f);
  const double h_prev = htilde(ws.xi_prev_opt, spec.alpha_f);
  const double delta_h = std::max(0.0, h_prev - h_warm);
  const double bound = h_warm + c_alpha * delta_h;
  // Tolerance pad keeps an interior when the budget pins the slacks to a
  // point (bound = 0 inside the safe set).
  bp.solver->problem().d_in[bp.budget_row] = bound + 1e-9 * (1.0 + bound);

  Mat z_bar = ws.z_warm;
  Mat v_bar = ws.v_warm;
  z_bar = rollout(spec.model, z_bar.col(0), v_bar);

  SolveOutput out;
  try {
    out = run_sqp(spec, bp, x, impl_->objective, p, std::move(z_bar), std::move(v_bar),
                  &ws.xi_warm, /*slacks_are_free=*/true);
  } catch (const SolveError& err) {
    std::ostringstream msg;
    msg << "solve_multiobjective infeasible although the warmstart satisfies the budget "
        << "(bound " << format_double(bound) << ", warmstart value "
        << format_double(h_warm) << "): " << err.what();
    throw InvariantError(msg.str());
  }

  const double h_ret = htilde(out.xi, spec.alpha_f);
  const double tol = (spec.model.is_linear ? 1e-7 : 1e-6) * (1.0 + std::abs(bound));
  if (h_ret > bound + tol) {
    throw InvariantError("solve_multiobjective: returned slacks exceed the decrease bound (" +
                         format_double(h_ret) + " > " + format_double(bound) + ")");
  }

  PcbfSolution sol;
  sol.z = std::move(out.z);
  sol.v = std::move(out.v);
  sol.xi = std::move(out.xi);
  sol.objective = out.objective + bp.obj_constant;
  sol.h_value = h_ret;
  sol.iterations = out.iterations;
  sol.solve_ms = std::chrono::duration<double, std::milli>(
                     std::chrono::steady_clock::now() - t0)
                     .count();
  return sol;
}

PcbfSolution solve_slack_min(const PcbfProblemSpec& spec, const Vec& x) {
  ProblemBank bank(spec, ObjectiveSpec::fuel());
  return bank.solve_slack_min(x);
}

PcbfSolution solve_objective(const PcbfProblemSpec& spec, const Vec& x,
                             const SlackSequence& xi_fixed, const ObjectiveSpec& objective,
                             const Vec& p) {
  ProblemBank bank(spec, objective);
  return bank.solve_objective(x, xi_fixed, p);
}

PcbfSolution solve_multiobjective(const PcbfProblemSpec& spec, const Vec& x,
                                  const WarmstartState& ws, double c_alpha,
                                  const ObjectiveSpec& objective, const Vec& p) {
  ProblemBank bank(spec, objective);
  return bank.solve_multiobjective(x, ws, c_alpha, p);
}

}  // namespace pcbf
