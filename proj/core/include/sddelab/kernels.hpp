#pragma once
#include <Eigen/Dense>
#include <vector>

#include "sddelab/grid.hpp"
#include "sddelab/model.hpp"
#include "sddelab/paths.hpp"

namespace sddelab {

// Kernels of the lifted variation system. The first variation of the state
// stacks into
//   X1(t) = [x1(t); x1(t - delta) (active once t > delta); x1_tilde(t)]
// in R^{3n}, and its dynamics close as a Volterra identity whose kernels
// split into an ungated part plus a part that switches on when t - s > delta:
//
//   A(t, s)   = A0(s) + 1_{t - s > delta} A1(s)
//   C^i(t, s) = C0^i(s) + 1_{t - s > delta} C1^i(s)
//
// A0 carries the drift derivative blocks [b_x, b_xdelta, b_xtilde] in its
// first block-row and the structural averaging row
// (I, -e^{-kappa delta} I, -kappa I) in its third; A1 repeats the drift
// blocks in the second block-row and vanishes elsewhere. C0/C1 follow the
// same pattern with the diffusion derivatives and keep the third block-row
// zero. The gate is strict: on the grid it reads k_t - k_s > m_delay, which
// matches a left-endpoint sum over s in [0, t - delta).
//
// Blocks are stored per path and node along a base trajectory. Node n_steps
// reuses the last control value; the fields assembled from these kernels only
// touch it through left-endpoint sums, so that convention carries no weight.
struct SvieKernels {
  int n = 0, d = 0;
  int n_paths = 0;
  TimeGrid grid;
  double kappa = 0.0;

  // flattened row-major 3n x 3n blocks on nodes 0 .. n_steps
  PathMatrix A0_blocks, A1_blocks;
  std::vector<PathMatrix> C0_blocks, C1_blocks;  // one entry per noise column

  // kept so the quadratic forcing assemblers can evaluate second derivatives
  // along the same trajectory (the caller owns model and path)
  const ModelSpec* model = nullptr;
  const PathMatrix* x = nullptr;
  ControlProcess u;

  using Block =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  bool gate(int k_t, int k_s) const { return k_t - k_s > grid.m_delay; }
  Block A0_at(int p, int k) const;
  Block A1_at(int p, int k) const;
  Block C0_at(int i, int p, int k) const;
  Block C1_at(int i, int p, int k) const;
  Eigen::MatrixXd A_at(int p, int k_t, int k_s) const;
  Eigen::MatrixXd C_at(int i, int p, int k_t, int k_s) const;
};

// Evaluates the derivative blocks of b and sigma along the trajectory x under
// the control u and assembles the gated kernel split above. x must cover
// nodes -m_delay .. n_steps of the grid with dim == m.n.
SvieKernels build_svie_matrices(const ModelSpec& m, const PathMatrix& x, const ControlProcess& u,
                                const TimeGrid& grid);

// Coefficient differences between a swapped control and the base one along a
// shared base trajectory. With u_alt a spike of u_base, the difference is
// nonzero only on the spike window (through the direct control slot) and one
// delay later (through the delayed slot). Evaluated on demand; differs(k)
// gives the cheap screen for the zero case.
struct SpikeForcings {
  const ModelSpec* model = nullptr;
  const PathMatrix* x = nullptr;
  TimeGrid grid;
  double kappa = 0.0;
  ControlProcess u_base, u_alt;

  bool differs(int k) const;
  Eigen::VectorXd delta_b(int p, int k) const;               // n
  Eigen::VectorXd delta_sigma(int i, int p, int k) const;    // n
  Eigen::MatrixXd delta_sigma_X(int i, int p, int k) const;  // n x 3n
  double delta_f(int p, int k, double y, const Eigen::VectorXd& z) const;
};

SpikeForcings build_spike_forcings(const ModelSpec& m, const PathMatrix& x,
                                   const ControlProcess& u_base, const ControlProcess& u_alt,
                                   const TimeGrid& grid);

// [v; 1_{t-s > delta} v; 0] in R^{3n}: the stacking every forcing column of
// the lifted system uses (same value in the first two block-rows, second one
// gated, third empty).
Eigen::VectorXd gated_stack(const SvieKernels& kern, const Eigen::VectorXd& v, int k_t, int k_s);

// Forcing columns of the lifted system at (t_{k_t}, s_{k_s}):
//   B    from the drift difference,
//   D^i  from the diffusion difference,
//   Bbar from the quadratic form of the drift Hessian in X1,
//   Dbar from the diffusion Hessian plus the cross term (delta sigma_X) X1.
// X1_lift holds the stacked first variation (dim 3n, nodes 0 .. n_steps).
Eigen::VectorXd B_at(const SvieKernels& kern, const SpikeForcings& forc, int p, int k_t, int k_s);
Eigen::VectorXd D_at(const SvieKernels& kern, const SpikeForcings& forc, int i, int p, int k_t,
                     int k_s);
Eigen::VectorXd Bbar_at(const SvieKernels& kern, const PathMatrix& X1_lift, int p, int k_t,
                        int k_s);
Eigen::VectorXd Dbar_at(const SvieKernels& kern, const SpikeForcings& forc,
                        const PathMatrix& X1_lift, int i, int p, int k_t, int k_s);

}  // namespace sddelab
