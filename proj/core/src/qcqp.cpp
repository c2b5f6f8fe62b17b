#include "pcbf/qcqp.hpp"

#include "pcbf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

namespace pcbf::qcqp {

namespace {

double max_step(const Vec& v, const Vec& dv, double tau) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) alpha = std::min(alpha, -tau * v[i] / dv[i]);
  }
  return alpha;
}

// Ratio test that ignores components already at their floor; those are
// clamped after the step instead of freezing the whole direction. Without
// this, one multiplier decaying to ~1e-200 with a persistently negative
// search direction pins the dual step length at zero.
double max_step_guarded(const Vec& v, const Vec& dv, double tau, const Vec& floor_v) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0 && v[i] > floor_v[i]) alpha = std::min(alpha, -tau * v[i] / dv[i]);
  }
  return alpha;
}

}  // namespace

double QuadCon::eval(const Vec& x) const {
  Vec xs(support.size());
  for (size_t i = 0; i < support.size(); ++i) xs[static_cast<Eigen::Index>(i)] = x[support[i]];
  return 0.5 * xs.dot(q * xs) + r.dot(xs) + c;
}

Vec QuadCon::gradient_on_support(const Vec& x) const {
  Vec xs(support.size());
  for (size_t i = 0; i < support.size(); ++i) xs[static_cast<Eigen::Index>(i)] = x[support[i]];
  return q * xs + r;
}

Solver::Solver(Problem prob, Options opt) : prob_(std::move(prob)), opt_(opt) {
  if (prob_.n < 1) throw UsageError("qcqp: empty problem");
  if (prob_.g.size() != prob_.n) throw UsageError("qcqp: g size mismatch");
  if (prob_.b_eq.size() != prob_.n_eq) throw UsageError("qcqp: b_eq size mismatch");
  if (prob_.d_in.size() != prob_.n_in) throw UsageError("qcqp: d_in size mismatch");
  for (const auto& t : prob_.h) {
    if (t.row < t.col) throw UsageError("qcqp: H triplets must be lower-triangular");
  }
  for (const auto& qc : prob_.quads) {
    const auto ns = static_cast<Eigen::Index>(qc.support.size());
    if (qc.q.rows() != ns || qc.q.cols() != ns || qc.r.size() != ns)
      throw UsageError("qcqp: quad constraint dimension mismatch");
  }
  build_structure();
}

void Solver::build_structure() {
  m_total_ = prob_.n_in + static_cast<int>(prob_.quads.size());
  kkt_dim_ = prob_.n + prob_.n_eq + m_total_;
  const int yoff = prob_.n;
  const int zoff = prob_.n + prob_.n_eq;

  std::vector<Eigen::Triplet<double>> tri;
  tri.reserve(prob_.h.size() + prob_.a_eq.size() + prob_.c_in.size() + kkt_dim_ + 64);

  for (const auto& t : prob_.h) tri.emplace_back(t.row, t.col, 0.0);
  for (const auto& t : prob_.a_eq) tri.emplace_back(yoff + t.row, t.col, 0.0);
  for (const auto& t : prob_.c_in) tri.emplace_back(zoff + t.row, t.col, 0.0);
  for (size_t k = 0; k < prob_.quads.size(); ++k) {
    const auto& qc = prob_.quads[k];
    for (size_t i = 0; i < qc.support.size(); ++i) {
      for (size_t j = 0; j <= i; ++j) {
        const int a = std::max(qc.support[i], qc.support[j]);
        const int b = std::min(qc.support[i], qc.support[j]);
        tri.emplace_back(a, b, 0.0);
      }
      tri.emplace_back(zoff + prob_.n_in + static_cast<int>(k), qc.support[i], 0.0);
    }
  }
  for (int i = 0; i < prob_.n; ++i) tri.emplace_back(i, i, 0.0);
  for (int i = 0; i < prob_.n_eq; ++i) tri.emplace_back(yoff + i, yoff + i, 0.0);
  for (int i = 0; i < m_total_; ++i) tri.emplace_back(zoff + i, zoff + i, 0.0);

  kkt_.resize(kkt_dim_, kkt_dim_);
  kkt_.setFromTriplets(tri.begin(), tri.end());
  kkt_.makeCompressed();

  // Slot lookup in compressed column storage.
  auto slot_of = [this](int row, int col) -> int {
    const int* outer = kkt_.outerIndexPtr();
    const int* inner = kkt_.innerIndexPtr();
    for (int p = outer[col]; p < outer[col + 1]; ++p) {
      if (inner[p] == row) return p;
    }
    throw UsageError("qcqp: internal scatter failure");
  };

  h_slot_.clear();
  for (const auto& t : prob_.h) h_slot_.push_back(slot_of(t.row, t.col));
  aeq_slot_.clear();
  for (const auto& t : prob_.a_eq) aeq_slot_.push_back(slot_of(yoff + t.row, t.col));
  cin_slot_.clear();
  for (const auto& t : prob_.c_in) cin_slot_.push_back(slot_of(zoff + t.row, t.col));
  quad_hess_slot_.assign(prob_.quads.size(), {});
  quad_grad_slot_.assign(prob_.quads.size(), {});
  for (size_t k = 0; k < prob_.quads.size(); ++k) {
    const auto& qc = prob_.quads[k];
    for (size_t i = 0; i < qc.support.size(); ++i) {
      for (size_t j = 0; j <= i; ++j) {
        const int a = std::max(qc.support[i], qc.support[j]);
        const int b = std::min(qc.support[i], qc.support[j]);
        quad_hess_slot_[k].push_back(slot_of(a, b));
      }
      quad_grad_slot_[k].push_back(
          slot_of(zoff + prob_.n_in + static_cast<int>(k), qc.support[i]));
    }
  }
  xdiag_slot_.clear();
  for (int i = 0; i < prob_.n; ++i) xdiag_slot_.push_back(slot_of(i, i));
  ydiag_slot_.clear();
  for (int i = 0; i < prob_.n_eq; ++i) ydiag_slot_.push_back(slot_of(yoff + i, yoff + i));
  zdiag_slot_.clear();
  for (int i = 0; i < m_total_; ++i) zdiag_slot_.push_back(slot_of(zoff + i, zoff + i));
}

void Solver::refresh_matrices() {
  std::vector<Eigen::Triplet<double>> tri;
  tri.reserve(prob_.h.size() * 2);
  for (const auto& t : prob_.h) {
    tri.emplace_back(t.row, t.col, t.value);
    if (t.row != t.col) tri.emplace_back(t.col, t.row, t.value);
  }
  h_sym_.resize(prob_.n, prob_.n);
  h_sym_.setFromTriplets(tri.begin(), tri.end());

  tri.clear();
  for (const auto& t : prob_.a_eq) tri.emplace_back(t.row, t.col, t.value);
  a_sp_.resize(prob_.n_eq, prob_.n);
  a_sp_.setFromTriplets(tri.begin(), tri.end());

  tri.clear();
  for (const auto& t : prob_.c_in) tri.emplace_back(t.row, t.col, t.value);
  c_sp_.resize(prob_.n_in, prob_.n);
  c_sp_.setFromTriplets(tri.begin(), tri.end());
}

void Solver::assemble_values(const Vec& x, const Vec& s, const Vec& lam, double delta) {
  double* vals = kkt_.valuePtr();
  std::fill(vals, vals + kkt_.nonZeros(), 0.0);

  for (size_t i = 0; i < prob_.h.size(); ++i) vals[h_slot_[i]] += prob_.h[i].value;
  for (size_t i = 0; i < prob_.a_eq.size(); ++i) vals[aeq_slot_[i]] += prob_.a_eq[i].value;
  for (size_t i = 0; i < prob_.c_in.size(); ++i) vals[cin_slot_[i]] += prob_.c_in[i].value;

  for (size_t k = 0; k < prob_.quads.size(); ++k) {
    const auto& qc = prob_.quads[k];
    const double lk = lam[prob_.n_in + static_cast<Eigen::Index>(k)];
    size_t idx = 0;
    for (size_t i = 0; i < qc.support.size(); ++i) {
      for (size_t j = 0; j <= i; ++j, ++idx) {
        vals[quad_hess_slot_[k][idx]] +=
            lk * qc.q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      }
    }
    const Vec grad = qc.gradient_on_support(x);
    for (size_t i = 0; i < qc.support.size(); ++i) {
      vals[quad_grad_slot_[k][i]] += grad[static_cast<Eigen::Index>(i)];
    }
  }

  for (int i = 0; i < prob_.n; ++i) vals[xdiag_slot_[i]] += delta;
  for (int i = 0; i < prob_.n_eq; ++i) vals[ydiag_slot_[i]] -= delta;
  for (int i = 0; i < m_total_; ++i) {
    vals[zdiag_slot_[i]] -= std::min(s[i] / lam[i], 1e16) + delta;
  }
}

Result Solver::solve(const Vec* x0) {
  Result res;
  const int n = prob_.n;
  const int m = m_total_;
  const int nq = static_cast<int>(prob_.quads.size());

  refresh_matrices();

  // Internal objective scaling keeps the barrier arithmetic near unit scale
  // even when cost rows carry alpha_f ~ 1e6.
  double obj_scale = std::max(1.0, prob_.g.cwiseAbs().maxCoeff());
  for (const auto& t : prob_.h) obj_scale = std::max(obj_scale, std::abs(t.value));
  const Vec g_s = prob_.g / obj_scale;
  Eigen::SparseMatrix<double> h_s = h_sym_ / obj_scale;

  Vec x = (x0 != nullptr && x0->size() == n) ? *x0 : Vec::Zero(n);
  Vec y = Vec::Zero(prob_.n_eq);

  auto ineq_values = [&](const Vec& xx, Vec& out) {
    if (prob_.n_in > 0) out.head(prob_.n_in) = c_sp_ * xx - prob_.d_in;
    for (int k = 0; k < nq; ++k) {
      out[prob_.n_in + k] = prob_.quads[static_cast<size_t>(k)].eval(xx);
    }
  };

  Vec s(m), lam(m);
  Vec gx(m);
  ineq_values(x, gx);
  for (int i = 0; i < m; ++i) {
    const double scale_i = 1.0 + (i < prob_.n_in ? std::abs(prob_.d_in[i]) : std::abs(gx[i]));
    s[i] = std::max(-gx[i], 1e-4 * scale_i);
    lam[i] = std::max(1e-2 / s[i], 1e-8);
  }

  // Pure equality-constrained problems collapse to one KKT solve.
  const bool has_ineq = m > 0;

  Vec r_d(n), r_eq(prob_.n_eq), r_in(m);

  auto dual_residual = [&](const Vec& xx, const Vec& yy, const Vec& ll) -> Vec {
    Vec rd = h_s * xx + g_s;
    if (prob_.n_eq > 0) rd += a_sp_.transpose() * yy;
    if (prob_.n_in > 0) rd += c_sp_.transpose() * ll.head(prob_.n_in);
    for (int k = 0; k < nq; ++k) {
      const auto& qc = prob_.quads[static_cast<size_t>(k)];
      const Vec grad = qc.gradient_on_support(xx);
      for (size_t i = 0; i < qc.support.size(); ++i) {
        rd[qc.support[i]] += ll[prob_.n_in + k] * grad[static_cast<Eigen::Index>(i)];
      }
    }
    return rd;
  };

  double delta = opt_.reg;
  Vec rhs(kkt_dim_), sol(kkt_dim_), sol2(kkt_dim_);
  const bool trace = std::getenv("PCBF_QCQP_TRACE") != nullptr;

  auto factorize = [&]() -> bool {
    for (int attempt = 0; attempt < 4; ++attempt) {
      assemble_values(x, s, lam, delta);
      if (!analyzed_) {
        ldlt_.analyzePattern(kkt_);
        analyzed_ = true;
      }
      ldlt_.factorize(kkt_);
      if (ldlt_.info() == Eigen::Success) return true;
      delta *= 100.0;
    }
    return false;
  };

  auto kkt_solve = [&](const Vec& b) -> Vec {
    Vec u = ldlt_.solve(b);
    // One refinement pass against the assembled (regularised) matrix.
    Vec r = kkt_.selfadjointView<Eigen::Lower>() * u - b;
    u -= ldlt_.solve(r);
    return u;
  };

  // Per-row scales for the primal residuals; a large budget bound must not
  // loosen the tolerance of unit-sized rows.
  Vec eq_den(prob_.n_eq), in_den(m);
  for (int i = 0; i < prob_.n_eq; ++i) eq_den[i] = 1.0 + std::abs(prob_.b_eq[i]);
  for (int i = 0; i < prob_.n_in; ++i) in_den[i] = 1.0 + std::abs(prob_.d_in[i]);
  for (int k = 0; k < nq; ++k)
    in_den[prob_.n_in + k] = 1.0 + std::abs(prob_.quads[static_cast<size_t>(k)].c);
  const double d_scale = 1.0 + (prob_.n_in > 0 ? prob_.d_in.cwiseAbs().maxCoeff() : 0.0);

  auto primal_rel = [&](const Vec& gxv, const Vec& xv) -> double {
    double out = 0.0;
    if (prob_.n_eq > 0) {
      const Vec re = a_sp_ * xv - prob_.b_eq;
      for (int i = 0; i < prob_.n_eq; ++i) out = std::max(out, std::abs(re[i]) / eq_den[i]);
    }
    for (int i = 0; i < m; ++i) out = std::max(out, gxv[i] / in_den[i]);
    return out;
  };

  // Dual residual relative to the size of its constituent terms: with
  // alpha_f-scale multipliers an absolute criterion would demand impossible
  // cancellation.
  auto dual_den = [&](const Vec& xx, const Vec& yy, const Vec& ll) -> double {
    double den = 1.0 + g_s.cwiseAbs().maxCoeff();
    den = std::max(den, (h_s * xx).cwiseAbs().maxCoeff());
    if (prob_.n_eq > 0) den = std::max(den, (a_sp_.transpose() * yy).cwiseAbs().maxCoeff());
    if (prob_.n_in > 0)
      den = std::max(den, (c_sp_.transpose() * ll.head(prob_.n_in)).cwiseAbs().maxCoeff());
    for (int k = 0; k < nq; ++k) {
      const auto& qc = prob_.quads[static_cast<size_t>(k)];
      const Vec grad = qc.gradient_on_support(xx);
      den = std::max(den, std::abs(ll[prob_.n_in + k]) * grad.cwiseAbs().maxCoeff());
    }
    return den;
  };

  // Best-so-far iterate: degenerate active sets (tangential constraint
  // intersections, empty slack interiors) can stall the last digits; a
  // near-target iterate is then returned instead of failing the solve.
  double best_score = std::numeric_limits<double>::infinity();
  Vec best_x = x;
  bool stalled = false;
  int last_improve = 0;

  int iter = 0;
  for (; iter < opt_.max_iter; ++iter) {
    ineq_values(x, gx);
    r_d = dual_residual(x, y, lam);
    if (prob_.n_eq > 0) r_eq = a_sp_ * x - prob_.b_eq;
    r_in = gx + s;
    const double mu = has_ineq ? s.dot(lam) / m : 0.0;

    const double obj_now = 0.5 * x.dot(h_sym_ * x) + prob_.g.dot(x);
    const double pri_res = primal_rel(gx, x);
    const double dual_res = r_d.cwiseAbs().maxCoeff() / dual_den(x, y, lam);
    const double gap_rel = mu * obj_scale / (1.0 + std::abs(obj_now));

    const double score =
        std::max({pri_res / opt_.tol_feas, dual_res / opt_.tol_feas,
                  has_ineq ? gap_rel / opt_.tol_gap : 0.0});
    if (score < best_score) {
      best_score = score;
      best_x = x;
      last_improve = iter;
    }
    if (score <= 1.0) {
      res.status = Status::optimal;
      break;
    }
    if (iter - last_improve > 25) {
      res.status = Status::max_iterations;
      res.message = "no progress over 25 iterations";
      stalled = true;
      break;
    }

    if (!factorize()) {
      res.status = Status::numerical_failure;
      res.message = "KKT factorisation failed";
      stalled = true;
      break;
    }

    // Affine predictor.
    rhs.head(n) = -r_d;
    rhs.segment(n, prob_.n_eq) = -r_eq;
    for (int i = 0; i < m; ++i) rhs[n + prob_.n_eq + i] = -gx[i];
    sol = kkt_solve(rhs);

    if (!has_ineq) {
      x += sol.head(n);
      y += sol.segment(n, prob_.n_eq);
      continue;
    }

    const Vec dx_a = sol.head(n);
    const Vec dl_a = sol.tail(m);
    Vec ds_a(m);
    {
      Vec cdx = Vec::Zero(m);
      if (prob_.n_in > 0) cdx.head(prob_.n_in) = c_sp_ * dx_a;
      for (int k = 0; k < nq; ++k) {
        const auto& qc = prob_.quads[static_cast<size_t>(k)];
        const Vec grad = qc.gradient_on_support(x);
        double dot = 0.0;
        for (size_t i = 0; i < qc.support.size(); ++i)
          dot += grad[static_cast<Eigen::Index>(i)] * dx_a[qc.support[i]];
        cdx[prob_.n_in + k] = dot;
      }
      ds_a = -r_in - cdx;
    }

    const double a_p_aff = max_step(s, ds_a, 1.0);
    const double a_d_aff = max_step(lam, dl_a, 1.0);
    const double mu_aff =
        (s + a_p_aff * ds_a).dot(lam + a_d_aff * dl_a) / m;
    double sigma = std::pow(mu_aff / std::max(mu, 1e-300), 3.0);
    sigma = std::clamp(sigma, 1e-8, 0.9);

    // Corrector. Rows whose complementarity product already sits far below
    // mu are effectively decided (inactive constraint, vanishing
    // multiplier); pushing them back to the central path would divide by a
    // collapsing lambda and poison the direction.
    for (int i = 0; i < m; ++i) {
      double centering = 0.0;
      if (s[i] * lam[i] > 1e-3 * mu) {
        centering = (sigma * mu - ds_a[i] * dl_a[i]) / lam[i];
      }
      rhs[n + prob_.n_eq + i] = -gx[i] - centering;
    }
    sol2 = kkt_solve(rhs);

    const Vec dx = sol2.head(n);
    const Vec dy = sol2.segment(n, prob_.n_eq);
    const Vec dl = sol2.tail(m);
    Vec ds(m);
    {
      Vec cdx = Vec::Zero(m);
      if (prob_.n_in > 0) cdx.head(prob_.n_in) = c_sp_ * dx;
      for (int k = 0; k < nq; ++k) {
        const auto& qc = prob_.quads[static_cast<size_t>(k)];
        const Vec grad = qc.gradient_on_support(x);
        double dot = 0.0;
        for (size_t i = 0; i < qc.support.size(); ++i)
          dot += grad[static_cast<Eigen::Index>(i)] * dx[qc.support[i]];
        cdx[prob_.n_in + k] = dot;
      }
      ds = -r_in - cdx;
    }

    const double tau = std::max(0.99, 1.0 - mu);
    // Components this small no longer cap the step; they are held positive
    // by the post-step clamp instead. Degenerate pairs (both factors -> 0)
    // then drift to the threshold without freezing the direction.
    const double tiny = 1e-13 * (1.0 + d_scale);
    const Vec s_floor = Vec::Constant(m, tiny);
    const Vec lam_floor = Vec::Constant(m, tiny);
    double a_p = max_step_guarded(s, ds, tau, s_floor);
    double a_d = max_step_guarded(lam, dl, tau, lam_floor);

    if (trace) {
      std::fprintf(stderr,
                   "[qcqp] it=%d mu=%.3e pri=%.3e dual=%.3e sigma=%.3e ap=%.3e ad=%.3e\n",
                   iter, mu, pri_res, dual_res, sigma, a_p, a_d);
    }

    if (a_p < 1e-11 && a_d < 1e-11) {
      res.status = Status::numerical_failure;
      res.message = "step length collapsed";
      stalled = true;
      break;
    }

    // Dampen steps that would blow up the residuals (degenerate faces can
    // produce wild corrector directions).
    const double merit_now = std::max(pri_res, dual_res);
    double damp = 1.0;
    Vec x_t = x, s_t = s, y_t = y, l_t = lam;
    Vec gx_t(m);
    for (int bt = 0; bt < 7; ++bt) {
      x_t = x + damp * a_p * dx;
      s_t = s + damp * a_p * ds;
      y_t = y + damp * a_d * dy;
      l_t = lam + damp * a_d * dl;
      ineq_values(x_t, gx_t);
      const double pri_t = primal_rel(gx_t, x_t);
      const double dual_t =
          dual_residual(x_t, y_t, l_t).cwiseAbs().maxCoeff() / dual_den(x_t, y_t, l_t);
      if (std::max(pri_t, dual_t) <= std::max(10.0 * merit_now, 1e3 * opt_.tol_feas)) break;
      damp *= 0.5;
    }
    x = x_t;
    s = s_t;
    y = y_t;
    lam = l_t;
    for (int i = 0; i < m; ++i) {
      s[i] = std::max(s[i], 0.01 * tiny);
      lam[i] = std::max(lam[i], 0.01 * tiny);
    }
  }

  if (iter >= opt_.max_iter) {
    res.status = Status::max_iterations;
    res.message = "interior point method hit iteration limit";
    stalled = true;
  }

  if (stalled && best_score <= 10.0) {
    // Within one order of the targets: good enough for the downstream
    // (1 + |value|)-scaled tolerances.
    x = best_x;
    res.status = Status::optimal;
    res.message = "reduced precision (stalled at score " + format_double(best_score) + ")";
  }

  res.x = x;
  res.objective = 0.5 * x.dot(h_sym_ * x) + prob_.g.dot(x);
  res.iterations = iter;
  ineq_values(x, gx);
  res.primal_residual = primal_rel(gx, x);
  res.dual_residual = dual_residual(x, y, lam).cwiseAbs().maxCoeff() / dual_den(x, y, lam);
  res.gap = has_ineq ? s.dot(lam) / m * obj_scale : 0.0;
  return res;
}

}  // namespace pcbf::qcqp
