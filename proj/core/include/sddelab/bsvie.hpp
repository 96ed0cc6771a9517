#pragma once
#include <functional>
#include <vector>

#include "sddelab/bsde.hpp"
#include "sddelab/grid.hpp"
#include "sddelab/paths.hpp"
#include "sddelab/regression.hpp"

namespace sddelab {

// Backward Volterra recursion. For each row time t_i the value process
//   Y^(i)_j = E_j[Y^(i)_{j+1}] + g2(i, j, y'(s_j)) dt,   j = n-1 .. i,
//   Y^(i)_n = psi(t_i),
// is swept backward, and the diagonal y'(t_i) := Y^(i)_i is the solution
// sample at t_i. Rows are processed from i = n down to 0 so the diagonal
// values entering g2 at j > i are already known; at j = i the driver sees
// the value being computed (handled by solve_bsvie, see BsvieOptions).
struct BsvieProblem {
  int q = 1;
  std::function<Eigen::VectorXd(int i, int p)> psi;  // row-i data at T, per path, dim q
  // integrand g2(t_i, s_j) per path; ydiag is the diagonal value y'(s_j).
  // Leave empty for a zero integrand.
  std::function<Eigen::VectorXd(int i, int j, int p, const Eigen::VectorXd& ydiag)> g2;
  // Declare this when the continuous integrand carries a term in the
  // martingale density of the integrand row (the kernel below the diagonal).
  // Such terms vanish identically in the deterministic mode, so the caller
  // can simply drop them there; in the sampled mode they are not
  // representable and solve_bsvie refuses to run.
  bool g2_uses_kernel = false;
};

struct BsvieOptions {
  RegressionBasis basis;
  bool deterministic = false;  // conditional expectation = cross-path mean, kernels = 0
  bool store_z = false;        // keep the row kernels (memory grows as n^2/2 per path)
  bool store_z_diag = false;   // keep only the diagonal kernel z'(t_i, s_i) (linear memory)
  // fixed-point passes for the diagonal self-reference in the sampled mode;
  // the deterministic mode instead probes g2 for its affine-in-y structure
  // and solves (I - dt M) y = rhs exactly.
  int diagonal_sweeps = 2;
  // raw regression coordinates per (path, node); required unless deterministic
  std::function<Eigen::VectorXd(int p, int k)> state_coords;
};

struct BsvieSolution {
  PathMatrix diag;  // y'(t_i) on nodes 0 .. n_steps, dim q
  // row i holds the densities z'(t_i, s_j) for columns j = i .. n_steps-1,
  // flattened noise-major like BsdeSolution::z; filled only when store_z
  // is set and the mode is sampled (they vanish in the deterministic mode).
  std::vector<PathMatrix> z_rows;
  bool has_z = false;
  // just the diagonal z'(t_i, s_i) on steps 0 .. n_steps-1 (store_z_diag)
  PathMatrix z_diag;
  bool has_z_diag = false;
  double max_condition = 0.0;
};

BsvieSolution solve_bsvie(const BsvieProblem& prob, const BrownianBundle& W, const TimeGrid& grid,
                          const BsvieOptions& opt);

// Projection of a fixed per-path value v onto the filtration: cond holds
// E_r[v] on nodes first_col .. upto and zeta the densities
//   zeta_r = E_r[v dW_r] / dt,   r = first_col .. upto-1,
// flattened noise-major. Used to extend a Volterra solution below its
// diagonal (the density of y'(t) on columns s < t) and to test the
// martingale reconstruction cond(first) + sum zeta_r dW_r against v.
struct RepresentedMartingale {
  PathMatrix cond;
  PathMatrix zeta;
  double max_condition = 0.0;
};

RepresentedMartingale represent_martingale(int q, const std::function<Eigen::VectorXd(int p)>& value,
                                           int upto, int first_col, const BrownianBundle& W,
                                           const TimeGrid& grid, const BsvieOptions& opt);

}  // namespace sddelab
