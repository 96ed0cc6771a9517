#pragma once
#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "sddelab/bsde.hpp"
#include "sddelab/bsvie.hpp"
#include "sddelab/gamma.hpp"
#include "sddelab/kernels.hpp"

namespace sddelab {

// First-order adjoint pair of the lifted system. lambda solves the plain
// backward equation with terminal (Gamma(T) Hbar)' and zero driver (so it is
// the martingale projection of that terminal), nu holds its densities. eta
// solves the row equation
//   eta(t) = (Gamma(t) Fbar(t))' + A(T,t)'(Gamma(T) Hbar)'
//            + sum_i C^i(T,t)' nu^i(t)
//            + int_t^T A(s,t)' eta(s) ds + (row-kernel term) - martingale,
// where Hbar / Fbar are the gradients of the terminal / driver in the
// stacked delay block along the base trajectory and the kernel blocks sit at
// the row time with the gate read off s - t. The row-kernel term carries the
// diffusion kernels against the below-diagonal densities; it vanishes in the
// deterministic mode and is not representable otherwise, which is where the
// state-independent-diffusion restriction below comes from.
struct FirstOrderAdjoint {
  PathMatrix lambda;  // nodes 0 .. n_steps, dim 3n
  PathMatrix nu;      // steps 0 .. n_steps-1, dim 3n*d, noise-major
  PathMatrix eta;     // nodes 0 .. n_steps, dim 3n (diagonal of the row system)
  // row kernels of eta (columns at and right of the diagonal), kept when the
  // sampled solve ran with store_zeta; the deterministic mode has none
  std::vector<PathMatrix> zeta_rows;
  bool has_zeta = false;
  // diagonal kernel zeta(t, t) alone (store_zeta_diag; linear memory)
  PathMatrix zeta_diag;
  bool has_zeta_diag = false;
  double max_condition = 0.0;
};

struct AdjointOptions {
  RegressionBasis basis;
  bool deterministic = false;
  bool store_zeta = false;       // keep eta's full row kernels (quadratic memory)
  bool store_zeta_diag = false;  // keep only zeta(t, t) (what assemble_pq needs)
  bool lambda_only = false;      // skip the row equation; any regime allowed then
  bool gates_off = false;    // assemblers only: force every delay-horizon
                             // gate closed (isolates the gated terms)
  // backward pair along the base trajectory, read by the gradient slots of
  // the driver when they depend on (y, z); zeros are substituted when null
  const PathMatrix* y_star = nullptr;  // nodes 0 .. n_steps, dim 1
  const PathMatrix* z_star = nullptr;  // steps 0 .. n_steps-1, dim d
  // regression coordinates; defaults to the delay block of the trajectory
  std::function<Eigen::VectorXd(int p, int k)> state_coords;
};

// Solves the backward pair above on the kernels' base trajectory. The row
// equation requires affine coefficient blocks outside the deterministic mode
// (and a state-independent diffusion, or the row-kernel term would be live).
FirstOrderAdjoint solve_first_order(const SvieKernels& ker, const GammaPath& gamma,
                                    const BrownianBundle& W, const AdjointOptions& opt);

// Collapse of the lifted adjoint onto the original state dimension:
//   p(s) = lambda0(s) + lambda1(s) 1_{s < T-delta}
//          + E_s[ int_s^T eta0 dt + int_{s+delta}^T eta1 dt 1_{s < T-delta} ]
//   q^i(s) = nu0^i + nu1^i 1 + int_s^T zeta0^i(t,s) dt
//          + int_{s+delta}^T zeta1^i(t,s) dt 1_{s < T-delta}
// with superscripts picking the first two n-blocks of the lifted fields.
// Integrals are left-endpoint sums; the below-diagonal zeta values are
// recovered by projecting the suffix sums of eta against the increments, and
// the diagonal value comes from the stored row kernels.
struct PqPair {
  PathMatrix p;  // nodes 0 .. n_steps, dim n
  PathMatrix q;  // steps 0 .. n_steps-1, dim n*d, noise-major
  double max_condition = 0.0;
};

PqPair assemble_pq(const FirstOrderAdjoint& adj, const BrownianBundle& W, const TimeGrid& grid,
                   const AdjointOptions& opt);

}  // namespace sddelab
