#include "pcbf/sdp.hpp"

#include "pcbf/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace pcbf::sdp {

namespace {

// Barrier state for one block: factorisation of F(x) and per-variable
// products needed for gradient/Hessian assembly.
struct BlockWork {
  Eigen::LLT<Mat> llt;
  std::vector<Mat> finv_fi;  // F^{-1} Fi, aligned with coeffs
  double logdet = 0.0;
};

bool factor_block(const LmiBlock& blk, const Vec& x, BlockWork* work) {
  const Mat f = blk.eval(x);
  work->llt.compute(f);
  if (work->llt.info() != Eigen::Success) return false;
  // LLT can "succeed" on slightly indefinite inputs; reject non-positive
  // diagonals explicitly.
  const auto& l = work->llt.matrixLLT();
  double ld = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    const double d = l(i, i);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    ld += std::log(d);
  }
  work->logdet = 2.0 * ld;
  return true;
}

}  // namespace

Mat LmiBlock::eval(const Vec& x) const {
  Mat f = f0;
  for (const auto& [idx, fi] : coeffs) f += x[idx] * fi;
  return f;
}

Problem::Problem(int nvars) : nvars_(nvars), cost_(Vec::Zero(nvars)) {
  if (nvars < 1) throw UsageError("sdp::Problem: nvars must be >= 1");
}

int Problem::add_block(LmiBlock blk) {
  if (blk.f0.rows() != blk.f0.cols()) throw UsageError("sdp: block not square");
  for (const auto& [idx, fi] : blk.coeffs) {
    if (idx < 0 || idx >= nvars_) throw UsageError("sdp: coefficient index out of range");
    if (fi.rows() != blk.f0.rows() || fi.cols() != blk.f0.cols())
      throw UsageError("sdp: coefficient dimension mismatch");
  }
  blocks_.push_back(std::move(blk));
  return static_cast<int>(blocks_.size()) - 1;
}

void Problem::set_cost(Vec c) {
  if (c.size() != nvars_) throw UsageError("sdp: cost dimension mismatch");
  cost_ = std::move(c);
}

void Problem::set_logdet_block(int block_index) {
  if (block_index < 0 || block_index >= static_cast<int>(blocks_.size()))
    throw UsageError("sdp: logdet block index out of range");
  logdet_block_ = block_index;
}

namespace {

// One barrier stage: minimise t*c'x + sum_k w_k(t) * (-logdet F_k(x)) by
// damped Newton. Returns false if the Hessian collapses.
struct Centering {
  const std::vector<LmiBlock>& blocks;
  Vec cost;                 // already scaled by t
  std::vector<double> weights;  // barrier weight per block
  int nvars;

  bool value(const Vec& x, std::vector<BlockWork>& works, double* phi) const {
    double v = cost.dot(x);
    for (size_t k = 0; k < blocks.size(); ++k) {
      if (!factor_block(blocks[k], x, &works[k])) return false;
      v -= weights[k] * works[k].logdet;
    }
    *phi = v;
    return true;
  }

  void grad_hess(const Vec& x, std::vector<BlockWork>& works, Vec* g, Mat* h) const {
    (void)x;
    *g = cost;
    h->setZero();
    for (size_t k = 0; k < blocks.size(); ++k) {
      const LmiBlock& blk = blocks[k];
      BlockWork& w = works[k];
      const double wt = weights[k];
      const size_t nc = blk.coeffs.size();
      w.finv_fi.resize(nc);
      for (size_t i = 0; i < nc; ++i) {
        w.finv_fi[i] = w.llt.solve(blk.coeffs[i].second);
        (*g)[blk.coeffs[i].first] -= wt * w.finv_fi[i].trace();
      }
      for (size_t i = 0; i < nc; ++i) {
        for (size_t j = i; j < nc; ++j) {
          const double hij =
              wt * (w.finv_fi[i].array() * w.finv_fi[j].transpose().array()).sum();
          const int vi = blk.coeffs[i].first;
          const int vj = blk.coeffs[j].first;
          (*h)(vi, vj) += hij;
          if (vi != vj) (*h)(vj, vi) += hij;
        }
      }
    }
  }
};

// Damped Newton to the central point. x must be strictly feasible on entry.
bool center(const Centering& c, Vec& x, int max_iter, double tol) {
  std::vector<BlockWork> works(c.blocks.size());
  std::vector<BlockWork> trial_works(c.blocks.size());
  double phi = 0.0;
  if (!c.value(x, works, &phi)) return false;

  Vec g(c.nvars);
  Mat h(c.nvars, c.nvars);
  for (int it = 0; it < max_iter; ++it) {
    c.grad_hess(x, works, &g, &h);
    const double diag_scale = std::max(1e-300, h.diagonal().cwiseAbs().maxCoeff());
    Mat h_reg = h;
    Eigen::LDLT<Mat> ldlt;
    double ridge = 0.0;
    for (int attempt = 0; attempt < 12; ++attempt) {
      ldlt.compute(h_reg);
      const bool pd = ldlt.info() == Eigen::Success &&
                      ldlt.vectorD().minCoeff() > 1e-14 * diag_scale;
      if (pd) break;
      ridge = ridge == 0.0 ? 1e-12 * diag_scale : ridge * 100.0;
      h_reg = h + ridge * Mat::Identity(c.nvars, c.nvars);
    }
    const Vec dx = ldlt.solve(-g);
    const double decrement2 = -g.dot(dx);
    if (!(decrement2 > 0.0) || !dx.allFinite()) return true;  // at (numerical) optimum
    if (decrement2 * 0.5 <= tol) return true;

    double step = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Vec x_trial = x + step * dx;
      double phi_trial = 0.0;
      if (c.value(x_trial, trial_works, &phi_trial) &&
          phi_trial <= phi - 0.25 * step * decrement2) {
        x = x_trial;
        phi = phi_trial;
        works.swap(trial_works);
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) return true;  // stalled; treat as converged to precision limits
  }
  return true;
}

double min_eig(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(m, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

}  // namespace

Result Problem::solve(const Options& opt, const Vec* x0_in) const {
  Result res;
  if (blocks_.empty()) throw UsageError("sdp: no LMI blocks");

  Vec x = (x0_in != nullptr && x0_in->size() == nvars_) ? *x0_in : Vec::Zero(nvars_);

  // Ball block ||x|| <= R via [[R I, x], [x', R]] >= 0. Both phases can have
  // unbounded recession directions (phase I always does); the ball keeps the
  // centering problems bounded. R is far outside any sensible design value,
  // and its barrier weight stays at 1, so the bias vanishes along the path.
  const double ball_radius = 1e8 * std::max(1.0, x.cwiseAbs().maxCoeff());
  std::vector<LmiBlock> blocks = blocks_;
  {
    LmiBlock ball;
    ball.f0 = Mat::Zero(nvars_ + 1, nvars_ + 1);
    ball.f0.topLeftCorner(nvars_, nvars_) = ball_radius * Mat::Identity(nvars_, nvars_);
    ball.f0(nvars_, nvars_) = ball_radius;
    for (int i = 0; i < nvars_; ++i) {
      Mat fi = Mat::Zero(nvars_ + 1, nvars_ + 1);
      fi(i, nvars_) = 1.0;
      fi(nvars_, i) = 1.0;
      ball.coeffs.emplace_back(i, fi);
    }
    blocks.push_back(std::move(ball));
  }

  // --- Phase I: minimise s subject to F_k(x) + s I >= 0 until s < 0. ---
  double s_needed = 0.0;
  for (const auto& blk : blocks) {
    s_needed = std::max(s_needed, -min_eig(blk.eval(x)));
  }
  // Feasibility margin scale from the user's blocks (the ball block's radius
  // would swamp it).
  double f_scale = 1.0;
  for (const auto& blk : blocks_) {
    f_scale = std::max(f_scale, blk.f0.cwiseAbs().maxCoeff());
  }

  if (s_needed > 0.0 || true) {
    // Always run at least one pass so the returned point has margin.
    const int n_aug = nvars_ + 1;
    std::vector<LmiBlock> aug_blocks;
    aug_blocks.reserve(blocks.size());
    for (const auto& blk : blocks) {
      LmiBlock ab;
      ab.f0 = blk.f0;
      ab.coeffs = blk.coeffs;
      ab.coeffs.emplace_back(nvars_, Mat::Identity(blk.dim(), blk.dim()));
      aug_blocks.push_back(std::move(ab));
    }
    Vec xa(n_aug);
    xa.head(nvars_) = x;
    xa[nvars_] = s_needed + 0.1 * std::max(1.0, s_needed) + 1e-6 * f_scale;

    const double s_target = -1e-8 * f_scale;
    double t = 1.0;
    bool strictly_feasible = false;
    for (int stage = 0; stage < opt.max_stages; ++stage) {
      Centering c{aug_blocks, Vec::Zero(n_aug), std::vector<double>(aug_blocks.size(), 1.0),
                  n_aug};
      c.cost[nvars_] = t;
      if (!center(c, xa, opt.max_newton_per_stage, opt.newton_tol)) break;
      if (xa[nvars_] < s_target) {
        strictly_feasible = true;
        break;
      }
      t *= opt.t_mult;
      if (t > 1e14) break;
    }
    if (!strictly_feasible) {
      res.status = Status::infeasible;
      res.x = xa.head(nvars_);
      double worst = std::numeric_limits<double>::infinity();
      for (size_t k = 0; k < blocks_.size(); ++k) {
        const double me = min_eig(blocks_[k].eval(res.x));
        if (me < worst) {
          worst = me;
          res.worst_block = static_cast<int>(k);
        }
      }
      res.min_block_eig = worst;
      res.message = "phase I did not reach a strictly feasible point (best slack " +
                    format_double(xa[nvars_]) + ")";
      return res;
    }
    x = xa.head(nvars_);
  }

  // --- Phase II: path following on the true objective. ---
  double total_dim = 0.0;
  for (const auto& blk : blocks) total_dim += blk.dim();

  double t = opt.t_init;
  for (int stage = 0; stage < opt.max_stages; ++stage) {
    Centering c{blocks, t * cost_, std::vector<double>(blocks.size(), 1.0), nvars_};
    if (logdet_block_ >= 0) c.weights[static_cast<size_t>(logdet_block_)] = t + 1.0;
    if (!center(c, x, opt.max_newton_per_stage, opt.newton_tol)) {
      res.status = Status::error;
      res.message = "barrier centering lost feasibility";
      return res;
    }
    const double obj_scale = 1.0 + std::abs(cost_.dot(x));
    if (total_dim / t <= opt.gap_tol * obj_scale) break;
    t *= opt.t_mult;
  }

  res.status = Status::optimal;
  res.x = x;
  res.objective = cost_.dot(x);
  double worst = std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < blocks_.size(); ++k) {
    const double me = min_eig(blocks_[k].eval(x));
    if (me < worst) {
      worst = me;
      res.worst_block = static_cast<int>(k);
    }
  }
  res.min_block_eig = worst;
  if (logdet_block_ >= 0) {
    BlockWork w;
    if (factor_block(blocks_[static_cast<size_t>(logdet_block_)], x, &w)) {
      res.objective -= w.logdet;
    }
  }
  return res;
}

}  // namespace pcbf::sdp
