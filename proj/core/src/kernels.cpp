#include "sddelab/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sddelab/errors.hpp"

namespace sddelab {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_trajectory(const ModelSpec& m, const PathMatrix& x, const ControlProcess& u,
                      const TimeGrid& grid) {
  if (x.dim != m.n) throw DimensionMismatch("trajectory dimension != model state dimension");
  if (x.first_index > -grid.m_delay || x.last_index < grid.n_steps)
    throw DimensionMismatch("trajectory does not cover nodes -m_delay .. n_steps");
  if (u.first_index > -grid.m_delay || u.last_index() < grid.n_steps - 1)
    throw DimensionMismatch("control does not cover indices -m_delay .. n_steps-1");
}

bool same_value(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() == b.size() && (a.array() == b.array()).all();
}

}  // namespace

SvieKernels::Block SvieKernels::A0_at(int p, int k) const {
  return Block(A0_blocks.vec(p, k).data(), 3 * n, 3 * n);
}

SvieKernels::Block SvieKernels::A1_at(int p, int k) const {
  return Block(A1_blocks.vec(p, k).data(), 3 * n, 3 * n);
}

SvieKernels::Block SvieKernels::C0_at(int i, int p, int k) const {
  return Block(C0_blocks[i].vec(p, k).data(), 3 * n, 3 * n);
}

SvieKernels::Block SvieKernels::C1_at(int i, int p, int k) const {
  return Block(C1_blocks[i].vec(p, k).data(), 3 * n, 3 * n);
}

Eigen::MatrixXd SvieKernels::A_at(int p, int k_t, int k_s) const {
  Eigen::MatrixXd out = A0_at(p, k_s);
  if (gate(k_t, k_s)) out += A1_at(p, k_s);
  return out;
}

Eigen::MatrixXd SvieKernels::C_at(int i, int p, int k_t, int k_s) const {
  Eigen::MatrixXd out = C0_at(i, p, k_s);
  if (gate(k_t, k_s)) out += C1_at(i, p, k_s);
  return out;
}

SvieKernels build_svie_matrices(const ModelSpec& m, const PathMatrix& x, const ControlProcess& u,
                                const TimeGrid& grid) {
  check_trajectory(m, x, u, grid);

  SvieKernels ker;
  ker.n = m.n;
  ker.d = m.d;
  ker.n_paths = x.n_paths;
  ker.grid = grid;
  ker.kappa = m.kappa;
  ker.model = &m;
  ker.x = &x;
  ker.u = u;

  const int bs = 3 * m.n;
  const int flat = bs * bs;
  ker.A0_blocks = PathMatrix(x.n_paths, 0, grid.n_steps, flat);
  ker.A1_blocks = PathMatrix(x.n_paths, 0, grid.n_steps, flat);
  ker.C0_blocks.assign(m.d, PathMatrix(x.n_paths, 0, grid.n_steps, flat));
  ker.C1_blocks.assign(m.d, PathMatrix(x.n_paths, 0, grid.n_steps, flat));

  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(m.n, m.n);
  const double decay = std::exp(-m.kappa * grid.delta);

  RowMat A0(bs, bs), A1(bs, bs), C(bs, bs);
  for (int p = 0; p < x.n_paths; ++p) {
    for (int k = 0; k <= grid.n_steps; ++k) {
      const int kc = std::min(k, grid.n_steps - 1);
      const Eigen::VectorXd& uk = u.at(kc);
      const Eigen::VectorXd& muk = u.at(kc - grid.m_delay);
      const Eigen::VectorXd X = delay_features(x, p, k, grid, m.kappa);
      const double t = grid.time(k);

      const Eigen::MatrixXd bX = eval_b_X(m, t, X, uk, muk);
      const std::vector<Eigen::MatrixXd> sX = eval_sigma_X(m, t, X, uk, muk);

      A0.setZero();
      A0.topRows(m.n) = bX;
      A0.block(2 * m.n, 0, m.n, m.n) = eye;
      A0.block(2 * m.n, m.n, m.n, m.n) = -decay * eye;
      A0.block(2 * m.n, 2 * m.n, m.n, m.n) = -m.kappa * eye;
      ker.A0_blocks.vec(p, k) = Eigen::Map<const Eigen::VectorXd>(A0.data(), flat);

      A1.setZero();
      A1.middleRows(m.n, m.n) = bX;
      ker.A1_blocks.vec(p, k) = Eigen::Map<const Eigen::VectorXd>(A1.data(), flat);

      for (int i = 0; i < m.d; ++i) {
        C.setZero();
        C.topRows(m.n) = sX[i];
        ker.C0_blocks[i].vec(p, k) = Eigen::Map<const Eigen::VectorXd>(C.data(), flat);
        C.setZero();
        C.middleRows(m.n, m.n) = sX[i];
        ker.C1_blocks[i].vec(p, k) = Eigen::Map<const Eigen::VectorXd>(C.data(), flat);
      }
    }
  }
  return ker;
}

bool SpikeForcings::differs(int k) const {
  if (k < 0 || k >= grid.n_steps) return false;
  const int md = grid.m_delay;
  return !same_value(u_alt.at(k), u_base.at(k)) ||
         !same_value(u_alt.at(k - md), u_base.at(k - md));
}

Eigen::VectorXd SpikeForcings::delta_b(int p, int k) const {
  const ModelSpec& m = *model;
  if (k < 0 || k >= grid.n_steps) throw ConfigInvalid("spike forcing node outside [0, n_steps)");
  if (!differs(k)) return Eigen::VectorXd::Zero(m.n);
  const Eigen::VectorXd X = delay_features(*x, p, k, grid, kappa);
  const double t = grid.time(k);
  const int md = grid.m_delay;
  return m.b(t, X, u_alt.at(k), u_alt.at(k - md)) - m.b(t, X, u_base.at(k), u_base.at(k - md));
}

Eigen::VectorXd SpikeForcings::delta_sigma(int i, int p, int k) const {
  const ModelSpec& m = *model;
  if (k < 0 || k >= grid.n_steps) throw ConfigInvalid("spike forcing node outside [0, n_steps)");
  if (i < 0 || i >= m.d) throw DimensionMismatch("noise column out of range");
  if (!differs(k)) return Eigen::VectorXd::Zero(m.n);
  const Eigen::VectorXd X = delay_features(*x, p, k, grid, kappa);
  const double t = grid.time(k);
  const int md = grid.m_delay;
  return m.sigma(t, X, u_alt.at(k), u_alt.at(k - md)).col(i) -
         m.sigma(t, X, u_base.at(k), u_base.at(k - md)).col(i);
}

Eigen::MatrixXd SpikeForcings::delta_sigma_X(int i, int p, int k) const {
  const ModelSpec& m = *model;
  if (k < 0 || k >= grid.n_steps) throw ConfigInvalid("spike forcing node outside [0, n_steps)");
  if (i < 0 || i >= m.d) throw DimensionMismatch("noise column out of range");
  if (!differs(k)) return Eigen::MatrixXd::Zero(m.n, 3 * m.n);
  const Eigen::VectorXd X = delay_features(*x, p, k, grid, kappa);
  const double t = grid.time(k);
  const int md = grid.m_delay;
  return eval_sigma_X(m, t, X, u_alt.at(k), u_alt.at(k - md))[i] -
         eval_sigma_X(m, t, X, u_base.at(k), u_base.at(k - md))[i];
}

double SpikeForcings::delta_f(int p, int k, double y, const Eigen::VectorXd& z) const {
  const ModelSpec& m = *model;
  if (k < 0 || k >= grid.n_steps) throw ConfigInvalid("spike forcing node outside [0, n_steps)");
  if (!differs(k)) return 0.0;
  const Eigen::VectorXd X = delay_features(*x, p, k, grid, kappa);
  const double t = grid.time(k);
  const int md = grid.m_delay;
  return m.f(t, X, y, z, u_alt.at(k), u_alt.at(k - md)) -
         m.f(t, X, y, z, u_base.at(k), u_base.at(k - md));
}

SpikeForcings build_spike_forcings(const ModelSpec& m, const PathMatrix& x,
                                   const ControlProcess& u_base, const ControlProcess& u_alt,
                                   const TimeGrid& grid) {
  check_trajectory(m, x, u_base, grid);
  check_trajectory(m, x, u_alt, grid);
  SpikeForcings forc;
  forc.model = &m;
  forc.x = &x;
  forc.grid = grid;
  forc.kappa = m.kappa;
  forc.u_base = u_base;
  forc.u_alt = u_alt;
  return forc;
}

Eigen::VectorXd gated_stack(const SvieKernels& kern, const Eigen::VectorXd& v, int k_t, int k_s) {
  if (v.size() != kern.n) throw DimensionMismatch("gated_stack expects an n-vector");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(3 * kern.n);
  out.head(kern.n) = v;
  if (kern.gate(k_t, k_s)) out.segment(kern.n, kern.n) = v;
  return out;
}

Eigen::VectorXd B_at(const SvieKernels& kern, const SpikeForcings& forc, int p, int k_t, int k_s) {
  return gated_stack(kern, forc.delta_b(p, k_s), k_t, k_s);
}

Eigen::VectorXd D_at(const SvieKernels& kern, const SpikeForcings& forc, int i, int p, int k_t,
                     int k_s) {
  return gated_stack(kern, forc.delta_sigma(i, p, k_s), k_t, k_s);
}

Eigen::VectorXd Bbar_at(const SvieKernels& kern, const PathMatrix& X1_lift, int p, int k_t,
                        int k_s) {
  const ModelSpec& m = *kern.model;
  if (X1_lift.dim != 3 * m.n) throw DimensionMismatch("lifted variation must have dim 3n");
  const int kc = std::min(k_s, kern.grid.n_steps - 1);
  const Eigen::VectorXd X = delay_features(*kern.x, p, k_s, kern.grid, kern.kappa);
  const double t = kern.grid.time(k_s);
  const std::vector<Eigen::MatrixXd> bXX =
      eval_b_XX(m, t, X, kern.u.at(kc), kern.u.at(kc - kern.grid.m_delay));
  const Eigen::VectorXd X1 = X1_lift.vec(p, k_s);
  Eigen::VectorXd top(m.n);
  for (int l = 0; l < m.n; ++l) top[l] = 0.5 * X1.dot(bXX[l] * X1);
  return gated_stack(kern, top, k_t, k_s);
}

Eigen::VectorXd Dbar_at(const SvieKernels& kern, const SpikeForcings& forc,
                        const PathMatrix& X1_lift, int i, int p, int k_t, int k_s) {
  const ModelSpec& m = *kern.model;
  if (X1_lift.dim != 3 * m.n) throw DimensionMismatch("lifted variation must have dim 3n");
  if (i < 0 || i >= m.d) throw DimensionMismatch("noise column out of range");
  const int kc = std::min(k_s, kern.grid.n_steps - 1);
  const Eigen::VectorXd X = delay_features(*kern.x, p, k_s, kern.grid, kern.kappa);
  const double t = kern.grid.time(k_s);
  const std::vector<std::vector<Eigen::MatrixXd>> sXX =
      eval_sigma_XX(m, t, X, kern.u.at(kc), kern.u.at(kc - kern.grid.m_delay));
  const Eigen::VectorXd X1 = X1_lift.vec(p, k_s);
  Eigen::VectorXd top(m.n);
  for (int l = 0; l < m.n; ++l) top[l] = 0.5 * X1.dot(sXX[i][l] * X1);
  top += forc.delta_sigma_X(i, p, k_s) * X1;
  return gated_stack(kern, top, k_t, k_s);
}

}  // namespace sddelab
