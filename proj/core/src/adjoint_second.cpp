#include "sddelab/adjoint_second.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "sddelab/errors.hpp"

namespace sddelab {
namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

int tri(int a, int b) { return a * (a + 1) / 2 + b; }  // a >= b

Mat symmetric_part(const Mat& x) { return 0.5 * (x + x.transpose()); }

}  // namespace

const Mat& SecondOrderAdjoint::p4_lower(int a, int b) const {
  if (a < b) throw IndexUnderflow("lower-triangle access with first index below second");
  return P4[tri(a, b)];
}

Mat SecondOrderAdjoint::p4(int a, int b) const {
  if (a >= b) return P4[tri(a, b)];
  return P4[tri(b, a)].transpose();
}

SecondOrderAdjoint solve_second_order(const SvieKernels& ker, const GammaPath& gamma,
                                      const SecondOrderOptions& opt) {
  if (ker.model == nullptr || ker.x == nullptr)
    throw ConfigInvalid("kernel bundle lost its model / trajectory references");
  const ModelSpec& m = *ker.model;
  if (m.regime != Regime::DeterministicAffine)
    throw RegimeUnsupported(
        "second-order stack needs deterministic coefficient blocks and a z-free driver");

  const TimeGrid& grid = ker.grid;
  const int ns = grid.n_steps, md = grid.m_delay, n = ker.n, d = ker.d, n3 = 3 * n;
  const double dt = grid.dt;
  if (gamma.value.n_paths < 1 || gamma.value.last_index < ns)
    throw DimensionMismatch("gamma path does not cover the grid");

  // path-0 working copies of the blocks (every path reads the same ones here)
  std::vector<Mat> A0(ns + 1), A1(ns + 1);
  std::vector<std::vector<Mat>> C0(d, std::vector<Mat>(ns + 1)),
      C1(d, std::vector<Mat>(ns + 1));
  for (int k = 0; k <= ns; ++k) {
    A0[k] = ker.A0_at(0, k);
    A1[k] = ker.A1_at(0, k);
    for (int i = 0; i < d; ++i) {
      C0[i][k] = ker.C0_at(i, 0, k);
      C1[i][k] = ker.C1_at(i, 0, k);
    }
  }

  SecondOrderAdjoint out;
  out.n_steps = ns;
  out.block = n3;
  out.P2.assign(ns + 1, Mat());
  out.P3.assign(ns + 1, Mat());
  out.d2G.assign(ns + 1, Mat());
  out.P4.assign(tri(ns, ns) + 1, Mat());

  const Vec XT = delay_features(*ker.x, 0, ns, grid, ker.kappa);
  out.P1 = gamma.at(0, ns) * eval_h_XX(m, XT);

  const Vec y0 = Vec::Zero(1), z0 = Vec::Zero(d);
  for (int j = 0; j <= ns; ++j) {
    const int kc = std::min(j, ns - 1);
    const double t = grid.time(j);
    const Vec X = delay_features(*ker.x, 0, j, grid, ker.kappa);
    const Vec& uk = ker.u.at(kc);
    const Vec& muk = ker.u.at(kc - md);
    Mat g = gamma.at(0, j) * eval_f_XX(m, t, X, 0.0, z0, uk, muk);
    if (opt.pq != nullptr) {
      const std::vector<Mat> bXX = eval_b_XX(m, t, X, uk, muk);
      const std::vector<std::vector<Mat>> sXX = eval_sigma_XX(m, t, X, uk, muk);
      for (int l = 0; l < n; ++l) {
        g += opt.pq->p.at(0, j, l) * bXX[l];
        for (int i = 0; i < d; ++i) g += opt.pq->q.at(0, kc, i * n + l) * sXX[i][l];
      }
    }
    out.d2G[j] = g;
  }

  const Mat eye = Mat::Identity(n3, n3);

  // drift-kernel field: backward pass with the diagonal quadrature point implicit
  out.P2[ns] = A0[ns].transpose() * out.P1;
  {
    Mat U0 = Mat::Zero(n3, n3), U1 = Mat::Zero(n3, n3);
    for (int b = ns - 1; b >= 0; --b) {
      if (b + 1 <= ns - 1) U0 += out.P2[b + 1];
      if (b + md + 1 <= ns - 1) U1 += out.P2[b + md + 1];
      const Mat ATb = ker.gate(ns, b) ? Mat(A0[b] + A1[b]) : A0[b];
      const Mat rhs = ATb.transpose() * out.P1 +
                      dt * (A0[b].transpose() * U0 + A1[b].transpose() * U1);
      out.P2[b] = Eigen::PartialPivLU<Mat>(eye - dt * A0[b].transpose()).solve(rhs);
    }
  }

  // terminal column of the coupled pair: empty integrals, no implicit point
  {
    Mat p3 = out.d2G[ns];
    for (int i = 0; i < d; ++i) p3 += C0[i][ns].transpose() * out.P1 * C0[i][ns];
    out.P3[ns] = p3;
    out.P4[tri(ns, ns)] =
        symmetric_part(A0[ns].transpose() * (out.P2[ns].transpose() + out.P3[ns]));
  }

  // per-row integral tails of the two-parameter field (first index fixed),
  // ungated / gated, as of the column being processed
  std::vector<Mat> R0(ns + 1, Mat::Zero(n3, n3)), R1(ns + 1, Mat::Zero(n3, n3));
  // per-second-argument suffix sums over the first argument, feeding the
  // double integral of the coupled field
  std::vector<Mat> V0(ns + 1, Mat::Zero(n3, n3)), V1(ns + 1, Mat::Zero(n3, n3));
  // running single-integral sums for the coupled field
  Mat SP20 = Mat::Zero(n3, n3), SP21 = Mat::Zero(n3, n3);
  Mat SP30 = Mat::Zero(n3, n3), SP31 = Mat::Zero(n3, n3);

  auto p4v = [&](int a, int c) -> Mat {
    return a >= c ? out.P4[tri(a, c)] : Mat(out.P4[tri(c, a)].transpose());
  };

  for (int b = ns - 1; b >= 0; --b) {
    // shift the row tails to the new column's integration range
    if (b + 1 <= ns - 1)
      for (int a = b + 1; a <= ns; ++a) R0[a] += p4v(a, b + 1);
    if (b + md + 1 <= ns - 1)
      for (int a = b + 1; a <= ns; ++a) R1[a] += p4v(a, b + md + 1);

    const bool horizon_open = ker.gate(ns, b);
    const Mat ATb = horizon_open ? Mat(A0[b] + A1[b]) : A0[b];
    Eigen::PartialPivLU<Mat> lub(eye - dt * A0[b].transpose());

    for (int a = ns; a >= b + 1; --a) {
      const Mat Aab = ker.gate(a, b) ? Mat(A0[b] + A1[b]) : A0[b];
      const Mat rhs = ATb.transpose() * out.P2[a].transpose() + Aab.transpose() * out.P3[a] +
                      dt * (A0[b].transpose() * R0[a] + A1[b].transpose() * R1[a]);
      out.P4[tri(a, b)] = lub.solve(rhs);
    }

    // fresh-column suffixes: the diagonal row's own tails and the new
    // second-argument entries for the double integral
    Mat cf0 = Mat::Zero(n3, n3), cf1 = Mat::Zero(n3, n3);
    for (int lp = b + 1; lp <= ns - 1; ++lp) {
      cf0 += out.P4[tri(lp, b)];
      if (lp >= b + md + 1) cf1 += out.P4[tri(lp, b)];
    }
    R0[b] = cf0.transpose();
    R1[b] = cf1.transpose();
    V0[b] = cf0;  // the diagonal entry joins after it is solved
    V1[b] = cf1;
    for (int l = b + 1; l <= ns - 1; ++l) {
      V0[l] += p4v(b, l);
      if (b + md + 1 <= ns - 1) V1[l] += p4v(b + md + 1, l);
    }

    SP20 += dt * out.P2[b];
    if (b + md + 1 <= ns - 1) SP21 += dt * out.P2[b + md + 1];
    if (b + 1 <= ns - 1) SP30 += dt * out.P3[b + 1];
    if (b + md + 1 <= ns - 1) SP31 += dt * out.P3[b + md + 1];

    Mat M00 = Mat::Zero(n3, n3), M01 = Mat::Zero(n3, n3);
    Mat M10 = Mat::Zero(n3, n3), M11 = Mat::Zero(n3, n3);
    for (int l = b; l <= ns - 1; ++l) {
      M00 += V0[l];
      M01 += V1[l];
      if (l >= b + md + 1) {
        M10 += V0[l];
        M11 += V1[l];
      }
    }

    // known part of the coupled equation at this column
    Mat K3 = out.d2G[b];
    bool c_live = false;
    for (int i = 0; i < d; ++i) {
      const Mat CiT = horizon_open ? Mat(C0[i][b] + C1[i][b]) : C0[i][b];
      K3 += CiT.transpose() * out.P1 * CiT;
      const Mat t1 = CiT.transpose() * (SP20.transpose() * C0[i][b] + SP21.transpose() * C1[i][b]);
      K3 += t1 + t1.transpose();
      K3 += C0[i][b].transpose() * SP30 * C0[i][b] + C1[i][b].transpose() * SP31 * C0[i][b] +
            C0[i][b].transpose() * SP31 * C1[i][b] + C1[i][b].transpose() * SP31 * C1[i][b];
      K3 += dt * dt *
            (C0[i][b].transpose() * M00 * C0[i][b] + C1[i][b].transpose() * M10 * C0[i][b] +
             C0[i][b].transpose() * M01 * C1[i][b] + C1[i][b].transpose() * M11 * C1[i][b]);
      if (C0[i][b].norm() > 0.0) c_live = true;
    }
    const Mat K4 = ATb.transpose() * out.P2[b].transpose() +
                   dt * (A0[b].transpose() * R0[b] + A1[b].transpose() * R1[b]);

    // diagonal coupling: the column's own quadrature point sandwiches the
    // unknown back into itself through both fields. The stored diagonal is
    // the symmetric one (the transpose rule holds with equality there), so
    // its self-reference reads the symmetrized value; iterate the strongly
    // contractive pair until it settles.
    Mat P3b = K3;
    Mat P4bb = symmetric_part(K4 + A0[b].transpose() * P3b);
    for (int it = 0;; ++it) {
      Mat next3 = K3;
      if (c_live)
        for (int i = 0; i < d; ++i)
          next3 += dt * (C0[i][b].transpose() * P3b * C0[i][b]) +
                   dt * dt * (C0[i][b].transpose() * P4bb * C0[i][b]);
      Mat next4 = symmetric_part(K4 + A0[b].transpose() * next3 +
                                 dt * (A0[b].transpose() * P4bb));
      const double moved = std::max((next3 - P3b).cwiseAbs().maxCoeff(),
                                    (next4 - P4bb).cwiseAbs().maxCoeff());
      P3b.swap(next3);
      P4bb.swap(next4);
      if (moved <= 1e-15 * (1.0 + P3b.cwiseAbs().maxCoeff() + P4bb.cwiseAbs().maxCoeff()))
        break;
      if (it >= 300)
        throw NoConvergence("diagonal coupling of the second-order stack did not settle");
    }
    out.P3[b] = P3b;
    out.P4[tri(b, b)] = P4bb;
    V0[b] += P4bb;
  }

  return out;
}

std::vector<Mat> assemble_script_p(const SecondOrderAdjoint& adj, const TimeGrid& grid,
                                   const ScriptPOptions& opt) {
  const int ns = grid.n_steps, md = grid.m_delay, n = adj.block / 3;
  if (adj.n_steps != ns) throw DimensionMismatch("stack was solved on a different grid");
  const double dt = grid.dt, dt2 = dt * dt;

  const auto blk = [n](const Mat& M, int i, int j) { return M.block(i * n, j * n, n, n); };
  // n x n block of the two-parameter field without materializing the
  // transpose-extended matrix
  const auto p4b = [&](int a, int c, int i, int j) -> Mat {
    if (a >= c) return blk(adj.P4[tri(a, c)], i, j);
    return blk(adj.P4[tri(c, a)], j, i).transpose();
  };
  const auto sym2 = [](const Mat& x) { return Mat(x + x.transpose()); };

  std::vector<Mat> value(ns + 1);
  const Mat base_h = blk(adj.P1, 0, 0);
  const Mat gated_h = blk(adj.P1, 1, 0) + blk(adj.P1, 0, 1) + blk(adj.P1, 1, 1);

  Mat sp2_11 = Mat::Zero(n, n), sp2_12 = Mat::Zero(n, n), sp2_g = Mat::Zero(n, n);
  Mat sp3_11 = Mat::Zero(n, n), sp3_g = Mat::Zero(n, n);
  Mat D11 = Mat::Zero(n, n), D12 = Mat::Zero(n, n), D21 = Mat::Zero(n, n),
      D22 = Mat::Zero(n, n);

  value[ns] = base_h;
  for (int k = ns - 1; k >= 0; --k) {
    sp2_11 += dt * sym2(blk(adj.P2[k], 0, 0));
    sp2_12 += dt * sym2(blk(adj.P2[k], 0, 1));
    sp3_11 += dt * blk(adj.P3[k], 0, 0);
    if (k + md <= ns - 1) {
      sp2_g += dt * (sym2(blk(adj.P2[k + md], 1, 0)) + sym2(blk(adj.P2[k + md], 1, 1)));
      sp3_g += dt * (blk(adj.P3[k + md], 1, 0) + blk(adj.P3[k + md], 0, 1) +
                     blk(adj.P3[k + md], 1, 1));
    }

    // suffix-square growth: the new first-index row over the full second
    // range, then the new second-index column over the remaining rows
    for (int l = k; l <= ns - 1; ++l) D11 += p4b(k, l, 0, 0);
    for (int lp = k + 1; lp <= ns - 1; ++lp) D11 += p4b(lp, k, 0, 0);
    if (k + md <= ns - 1) {
      for (int l = k; l <= ns - 1; ++l) D12 += p4b(k + md, l, 0, 1);
      for (int l = k + md; l <= ns - 1; ++l) D21 += p4b(k, l, 1, 0);
      for (int lp = k + 1; lp <= ns - 1; ++lp) D21 += p4b(lp, k + md, 1, 0);
      for (int l = k + md; l <= ns - 1; ++l) D22 += p4b(k + md, l, 1, 1);
      for (int lp = k + md + 1; lp <= ns - 1; ++lp) D22 += p4b(lp, k + md, 1, 1);
    }
    for (int lp = k + md + 1; lp <= ns - 1; ++lp) D12 += p4b(lp, k, 0, 1);

    value[k] = base_h + sp2_11 + sp3_11 + dt2 * D11;
    if (!opt.gates_off && k < ns - md)
      value[k] += gated_h + sp2_12 + sp2_g + sp3_g + dt2 * (D12 + D21 + D22);
  }
  return value;
}

Mat script_p_gated_terms(const SecondOrderAdjoint& adj, const TimeGrid& grid, int k) {
  const int ns = grid.n_steps, md = grid.m_delay, n = adj.block / 3;
  if (adj.n_steps != ns) throw DimensionMismatch("stack was solved on a different grid");
  if (k < 0 || k > ns) throw IndexUnderflow("gated-term node outside the grid");
  const double dt = grid.dt, dt2 = dt * dt;

  const auto blk = [n](const Mat& M, int i, int j) { return M.block(i * n, j * n, n, n); };
  const auto p4b = [&](int a, int c, int i, int j) -> Mat {
    if (a >= c) return blk(adj.P4[tri(a, c)], i, j);
    return blk(adj.P4[tri(c, a)], j, i).transpose();
  };

  Mat g = blk(adj.P1, 1, 0) + blk(adj.P1, 0, 1) + blk(adj.P1, 1, 1);
  for (int l = k; l <= ns - 1; ++l)
    g += dt * (blk(adj.P2[l], 0, 1).transpose() + blk(adj.P2[l], 0, 1));
  for (int l = k + md; l <= ns - 1; ++l) {
    g += dt * (blk(adj.P2[l], 1, 0).transpose() + blk(adj.P2[l], 1, 0) +
               blk(adj.P2[l], 1, 1).transpose() + blk(adj.P2[l], 1, 1));
    g += dt * (blk(adj.P3[l], 1, 0) + blk(adj.P3[l], 0, 1) + blk(adj.P3[l], 1, 1));
  }
  for (int lp = k + md; lp <= ns - 1; ++lp)
    for (int l = k; l <= ns - 1; ++l) g += dt2 * p4b(lp, l, 0, 1);
  for (int lp = k; lp <= ns - 1; ++lp)
    for (int l = k + md; l <= ns - 1; ++l) g += dt2 * p4b(lp, l, 1, 0);
  for (int lp = k + md; lp <= ns - 1; ++lp)
    for (int l = k + md; l <= ns - 1; ++l) g += dt2 * p4b(lp, l, 1, 1);
  return g;
}

}  // namespace sddelab
