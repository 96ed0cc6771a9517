#include <cmath>
#include <string>

#include "sddelab/bsvie.hpp"
#include "sddelab/errors.hpp"

namespace sddelab {

namespace {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// cross-path mean projector used by the deterministic mode
ConditionalExpectation mean_projector(int np) {
  return ConditionalExpectation(Mat::Ones(np, 1), 0.0);
}

}  // namespace

BsvieSolution solve_bsvie(const BsvieProblem& prob, const BrownianBundle& W, const TimeGrid& grid,
                          const BsvieOptions& opt) {
  const int q = prob.q, d = W.dim(), np = W.n_paths(), n = grid.n_steps;
  if (q < 1 || !prob.psi) throw ConfigInvalid("bsvie: psi required and q >= 1");
  if (opt.diagonal_sweeps < 1) throw ConfigInvalid("bsvie: diagonal_sweeps must be >= 1");
  if (!opt.deterministic && !opt.state_coords)
    throw ConfigInvalid("bsvie: regression coordinates required outside deterministic mode");
  if (prob.g2_uses_kernel && !opt.deterministic)
    throw UnsupportedDiagonal(
        "bsvie: integrands coupled to the below-diagonal kernel are only solvable in "
        "deterministic mode (where that kernel vanishes)");
  if (W.grid().n_steps != n) throw NonAlignedHorizon("bsvie: noise bundle grid mismatch");

  // One projector per step, shared by every row that sweeps through it.
  // Building the Gram factorizations once is what keeps the n^2/2 sweep
  // affordable; the memory cost is one feature block per step.
  std::vector<ConditionalExpectation> projs;
  BsvieSolution sol;
  if (opt.deterministic) {
    projs.push_back(mean_projector(np));
  } else {
    projs.reserve(n);
    for (int k = 0; k < n; ++k) {
      projs.push_back(
          make_step_projector([&](int p) { return opt.state_coords(p, k); }, np, opt.basis));
      sol.max_condition = std::max(sol.max_condition, projs.back().condition_estimate());
    }
  }
  const bool keep_z = opt.store_z && !opt.deterministic;
  const bool keep_diag = opt.store_z_diag && !opt.deterministic;

  sol.diag = PathMatrix(np, 0, n, q);
  sol.has_z = keep_z;
  if (keep_z) sol.z_rows.assign(n + 1, PathMatrix());
  sol.has_z_diag = keep_diag;
  if (keep_diag) sol.z_diag = PathMatrix(np, 0, n - 1, q * d);

  Mat Y(np, q);
  Vec target(np), fitted(np);
  for (int i = n; i >= 0; --i) {
    for (int p = 0; p < np; ++p) {
      const Vec row_data = prob.psi(i, p);
      if (row_data.size() != q) throw DimensionMismatch("bsvie psi has wrong dimension");
      Y.row(p) = row_data;
    }
    if (keep_z && i < n) sol.z_rows[i] = PathMatrix(np, i, n - 1, q * d);

    for (int j = n - 1; j >= i; --j) {
      const ConditionalExpectation& proj = opt.deterministic ? projs[0] : projs[j];

      if (keep_z || (keep_diag && j == i)) {
        for (int i2 = 0; i2 < d; ++i2)
          for (int c = 0; c < q; ++c) {
            for (int p = 0; p < np; ++p) target[p] = Y(p, c) * W.dW(p, j, i2);
            fitted = proj.project(target);
            for (int p = 0; p < np; ++p) {
              if (keep_z) sol.z_rows[i].at(p, j, i2 * q + c) = fitted[p] / grid.dt;
              if (keep_diag && j == i) sol.z_diag.at(p, i, i2 * q + c) = fitted[p] / grid.dt;
            }
          }
      }

      for (int c = 0; c < q; ++c) {
        target = Y.col(c);
        Y.col(c) = proj.project(target);
      }

      if (!prob.g2) continue;
      if (j > i) {
        for (int p = 0; p < np; ++p) {
          const Vec g = prob.g2(i, j, p, Vec(sol.diag.vec(p, j)));
          if (g.size() != q) throw DimensionMismatch("bsvie integrand has wrong dimension");
          Y.row(p) += grid.dt * g.transpose();
        }
      } else if (opt.deterministic) {
        // the diagonal feeds back into its own integrand; probe the affine
        // structure g2(y) = g0 + M y and solve (I - dt M) y = ybar + dt g0
        const Vec g0 = prob.g2(i, i, 0, Vec::Zero(q));
        if (g0.size() != q) throw DimensionMismatch("bsvie integrand has wrong dimension");
        Mat M(q, q);
        for (int c = 0; c < q; ++c) M.col(c) = prob.g2(i, i, 0, Vec(Vec::Unit(q, c))) - g0;
        const Eigen::PartialPivLU<Mat> lu(Mat::Identity(q, q) - grid.dt * M);
        for (int p = 0; p < np; ++p)
          Y.row(p) = lu.solve(Vec(Y.row(p).transpose() + grid.dt * g0)).transpose();
      } else {
        for (int p = 0; p < np; ++p) {
          const Vec ybar = Y.row(p);
          Vec y = ybar;
          for (int sweep = 0; sweep < opt.diagonal_sweeps; ++sweep) {
            const Vec g = prob.g2(i, i, p, y);
            if (g.size() != q) throw DimensionMismatch("bsvie integrand has wrong dimension");
            y = ybar + grid.dt * g;
          }
          Y.row(p) = y;
        }
      }
    }

    for (int p = 0; p < np; ++p) {
      sol.diag.vec(p, i) = Y.row(p);
      if (!Y.row(p).allFinite())
        throw NonFinite("bsvie value not finite at row " + std::to_string(i) + ", path " +
                        std::to_string(p));
    }
  }
  return sol;
}

RepresentedMartingale represent_martingale(int q, const std::function<Eigen::VectorXd(int p)>& value,
                                           int upto, int first_col, const BrownianBundle& W,
                                           const TimeGrid& grid, const BsvieOptions& opt) {
  const int d = W.dim(), np = W.n_paths(), n = grid.n_steps;
  if (q < 1 || !value) throw ConfigInvalid("represent: value required and q >= 1");
  if (first_col < 0 || first_col > upto || upto > n)
    throw ConfigInvalid("represent: need 0 <= first_col <= upto <= n_steps");
  if (!opt.deterministic && !opt.state_coords)
    throw ConfigInvalid("represent: regression coordinates required outside deterministic mode");
  if (W.grid().n_steps != n) throw NonAlignedHorizon("represent: noise bundle grid mismatch");

  Mat V(np, q);
  for (int p = 0; p < np; ++p) {
    const Vec v = value(p);
    if (v.size() != q) throw DimensionMismatch("represent value has wrong dimension");
    if (!v.allFinite()) throw NonFinite("represent value not finite at path " + std::to_string(p));
    V.row(p) = v;
  }

  RepresentedMartingale rep;
  rep.cond = PathMatrix(np, first_col, upto, q);
  if (upto > first_col) rep.zeta = PathMatrix(np, first_col, upto - 1, q * d);

  Vec target(np), fitted(np);
  for (int r = first_col; r <= upto; ++r) {
    const ConditionalExpectation proj =
        opt.deterministic
            ? mean_projector(np)
            : make_step_projector([&](int p) { return opt.state_coords(p, r); }, np, opt.basis);
    rep.max_condition = std::max(rep.max_condition, proj.condition_estimate());

    for (int c = 0; c < q; ++c) {
      target = V.col(c);
      fitted = proj.project(target);
      for (int p = 0; p < np; ++p) rep.cond.at(p, r, c) = fitted[p];
    }
    if (r == upto) break;
    for (int i = 0; i < d; ++i)
      for (int c = 0; c < q; ++c) {
        for (int p = 0; p < np; ++p) target[p] = V(p, c) * W.dW(p, r, i);
        fitted = proj.project(target);
        for (int p = 0; p < np; ++p) rep.zeta.at(p, r, i * q + c) = fitted[p] / grid.dt;
      }
  }
  return rep;
}

}  // namespace sddelab
