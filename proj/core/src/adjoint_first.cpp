#include "sddelab/adjoint_first.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "sddelab/errors.hpp"

namespace sddelab {
namespace {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// gate 1_{[0, T-delta)}(s_j): half-open, so the node at T - delta is out
bool horizon_gate(const TimeGrid& grid, int j, bool gates_off) {
  return !gates_off && j < grid.n_steps - grid.m_delay;
}

bool any_nonzero(const PathMatrix& blocks) {
  for (double v : blocks.values)
    if (v != 0.0) return true;
  return false;
}

}  // namespace

FirstOrderAdjoint solve_first_order(const SvieKernels& ker, const GammaPath& gamma,
                                    const BrownianBundle& W, const AdjointOptions& opt) {
  if (!ker.model || !ker.x) throw ConfigInvalid("adjoint: kernels carry no model/trajectory");
  const ModelSpec& m = *ker.model;
  const TimeGrid& grid = ker.grid;
  const PathMatrix& x = *ker.x;
  const int np = x.n_paths;
  const int n3 = 3 * m.n;
  const int ns = grid.n_steps;
  if (gamma.value.n_paths != np || gamma.value.last_index < ns)
    throw DimensionMismatch("adjoint: weight paths do not match the trajectory");

  // terminal data Gamma(T) Hbar', shared by both solves
  Mat termT(np, n3);
  for (int p = 0; p < np; ++p) {
    const Vec XT = delay_features(x, p, ns, grid, ker.kappa);
    termT.row(p) = gamma.at(p, ns) * eval_h_X(m, XT).transpose();
  }

  AdjointOptions local = opt;
  if (!local.deterministic && !local.state_coords)
    local.state_coords = delay_coords(x, grid, ker.kappa);

  BsdeProblem lam;
  lam.q = n3;
  lam.terminal = [&termT](int p) { return Vec(termT.row(p)); };
  BsdeOptions bopt;
  bopt.basis = local.basis;
  bopt.deterministic = local.deterministic;
  bopt.state_coords = local.state_coords;
  BsdeSolution ls = solve_bsde(lam, W, grid, bopt);

  FirstOrderAdjoint out;
  out.lambda = std::move(ls.y);
  out.nu = std::move(ls.z);
  out.max_condition = ls.max_condition;
  if (opt.lambda_only) return out;

  if (!opt.deterministic && m.regime == Regime::General)
    throw RegimeUnsupported(
        "adjoint row equation needs affine coefficient blocks outside the deterministic mode");
  bool diffusion_kernels_live = false;
  for (int i = 0; i < m.d && !diffusion_kernels_live; ++i)
    diffusion_kernels_live = any_nonzero(ker.C0_blocks[i]) || any_nonzero(ker.C1_blocks[i]);
  if (diffusion_kernels_live && !opt.deterministic)
    throw RegimeUnsupported(
        "adjoint row equation with state-dependent diffusion only runs in the deterministic "
        "mode (its kernel term is not representable otherwise)");

  BsvieProblem row;
  row.q = n3;
  // the continuous driver carries C'(s,t) zeta(s,t); declared so the solver
  // refuses any mode where it would not vanish
  row.g2_uses_kernel = diffusion_kernels_live;
  row.psi = [&](int i, int p) -> Vec {
    const int kc = std::min(i, ns - 1);
    const double t = grid.time(i);
    const double y = opt.y_star ? opt.y_star->at(p, i, 0) : 0.0;
    const Vec z = opt.z_star ? Vec(opt.z_star->vec(p, kc)) : Vec::Zero(m.d);
    const Vec X = delay_features(x, p, i, grid, ker.kappa);
    const Vec fX = eval_f_X(m, t, X, y, z, ker.u.at(kc), ker.u.at(kc - grid.m_delay));

    Vec psi = gamma.at(p, i) * fX;
    const bool open = ker.gate(ns, i);
    const Vec lam_term = termT.row(p).transpose();
    psi.noalias() += ker.A0_at(p, i).transpose() * lam_term;
    if (open) psi.noalias() += ker.A1_at(p, i).transpose() * lam_term;
    for (int i2 = 0; i2 < m.d; ++i2) {
      // nu at the row time; the final node reads the last available density
      const Vec nucol = out.nu.vec(p, kc).segment(i2 * n3, n3);
      psi.noalias() += ker.C0_at(i2, p, i).transpose() * nucol;
      if (open) psi.noalias() += ker.C1_at(i2, p, i).transpose() * nucol;
    }
    return psi;
  };
  row.g2 = [&](int i, int j, int p, const Vec& ydiag) -> Vec {
    Vec v = ker.A0_at(p, i).transpose() * ydiag;
    if (ker.gate(j, i)) v.noalias() += ker.A1_at(p, i).transpose() * ydiag;
    return v;
  };

  BsvieOptions vopt;
  vopt.basis = local.basis;
  vopt.deterministic = local.deterministic;
  vopt.store_z = local.store_zeta;
  vopt.store_z_diag = local.store_zeta_diag;
  vopt.state_coords = local.state_coords;
  BsvieSolution vs = solve_bsvie(row, W, grid, vopt);

  out.eta = std::move(vs.diag);
  out.zeta_rows = std::move(vs.z_rows);
  out.has_zeta = vs.has_z;
  out.zeta_diag = std::move(vs.z_diag);
  out.has_zeta_diag = vs.has_z_diag;
  out.max_condition = std::max(out.max_condition, vs.max_condition);
  return out;
}

PqPair assemble_pq(const FirstOrderAdjoint& adj, const BrownianBundle& W, const TimeGrid& grid,
                   const AdjointOptions& opt) {
  const int n3 = adj.lambda.dim;
  if (n3 <= 0 || n3 % 3 != 0) throw DimensionMismatch("assemble_pq: lifted dim is not 3n");
  const int n = n3 / 3;
  const int ns = grid.n_steps, md = grid.m_delay, np = adj.lambda.n_paths;
  if (adj.eta.dim != n3 || adj.eta.n_paths != np || adj.eta.last_index < ns)
    throw ConfigInvalid("assemble_pq: needs the solved row field");
  if (adj.nu.dim % n3 != 0 || adj.nu.dim == 0)
    throw DimensionMismatch("assemble_pq: density layout mismatch");
  const int d = adj.nu.dim / n3;
  const bool det = opt.deterministic;
  if (!det && !adj.has_zeta_diag && !adj.has_zeta)
    throw ConfigInvalid("assemble_pq: sampled assembly needs the stored diagonal kernels");
  if (!det && !opt.state_coords)
    throw ConfigInvalid("assemble_pq: sampled assembly needs regression coordinates");

  // diagonal zeta reader: prefer the compact store, fall back to full rows
  auto zeta_diag_at = [&adj](int p, int j, int flat) {
    return adj.has_zeta_diag ? adj.zeta_diag.at(p, j, flat) : adj.zeta_rows[j].at(p, j, flat);
  };

  // per-path suffix sums S_j = dt * sum_{l=j..ns-1} eta(t_l)
  PathMatrix S(np, 0, ns, n3);
  for (int p = 0; p < np; ++p) {
    Vec acc = Vec::Zero(n3);
    for (int j = ns - 1; j >= 0; --j) {
      acc += grid.dt * adj.eta.vec(p, j);
      S.vec(p, j) = acc;
    }
  }

  PqPair out;
  out.p = PathMatrix(np, 0, ns, n);
  out.q = PathMatrix(np, 0, ns - 1, n * d);

  Vec target(np), dw(np);
  for (int j = 0; j < ns; ++j) {
    const bool gate = horizon_gate(grid, j, opt.gates_off);

    if (det) {
      for (int p = 0; p < np; ++p) {
        Vec val = adj.lambda.vec(p, j).head(n) + S.vec(p, j).head(n);
        if (gate) val += adj.lambda.vec(p, j).segment(n, n) + S.vec(p, j + md).segment(n, n);
        out.p.vec(p, j) = val;
        for (int i2 = 0; i2 < d; ++i2)
          for (int c = 0; c < n; ++c)
            out.q.at(p, j, i2 * n + c) =
                adj.nu.at(p, j, i2 * n3 + c) + (gate ? adj.nu.at(p, j, i2 * n3 + n + c) : 0.0);
      }
      continue;
    }

    const ConditionalExpectation proj =
        make_step_projector([&](int p) { return opt.state_coords(p, j); }, np, opt.basis);
    out.max_condition = std::max(out.max_condition, proj.condition_estimate());

    // E_j of the eta tail (the adapted lambda part is added directly)
    Mat ptail(np, n), qtail(np, n);
    for (int p = 0; p < np; ++p) {
      Vec t1 = S.vec(p, j).head(n);
      Vec t2 = S.vec(p, j + 1).head(n);
      if (gate) {
        const Vec gated = S.vec(p, j + md).segment(n, n);
        t1 += gated;
        t2 += gated;
      }
      ptail.row(p) = t1;
      qtail.row(p) = t2;
    }
    for (int c = 0; c < n; ++c) {
      const Vec fitted = proj.project(ptail.col(c));
      for (int p = 0; p < np; ++p)
        out.p.at(p, j, c) = adj.lambda.at(p, j, c) +
                            (gate ? adj.lambda.at(p, j, n + c) : 0.0) + fitted[p];
    }
    // q: densities of the same tail against each increment, shifted past the
    // diagonal whose kernel is read from the row solve instead
    for (int i2 = 0; i2 < d; ++i2) {
      for (int p = 0; p < np; ++p) dw[p] = W.dW(p, j, i2);
      for (int c = 0; c < n; ++c) {
        for (int p = 0; p < np; ++p) target[p] = qtail(p, c) * dw[p];
        const Vec fitted = proj.project(target);
        for (int p = 0; p < np; ++p)
          out.q.at(p, j, i2 * n + c) = adj.nu.at(p, j, i2 * n3 + c) +
                                       (gate ? adj.nu.at(p, j, i2 * n3 + n + c) : 0.0) +
                                       grid.dt * zeta_diag_at(p, j, i2 * n3 + c) +
                                       fitted[p] / grid.dt;
      }
    }
  }

  // s = T: every gate is off and the tail is empty
  for (int p = 0; p < np; ++p) out.p.vec(p, ns) = adj.lambda.vec(p, ns).head(n);
  return out;
}

}  // namespace sddelab
