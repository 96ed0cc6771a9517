#pragma once
#include <functional>

#include "sddelab/forward.hpp"
#include "sddelab/grid.hpp"
#include "sddelab/model.hpp"
#include "sddelab/paths.hpp"
#include "sddelab/regression.hpp"

namespace sddelab {

// Solution of one backward recursion. y holds q components on nodes
// 0 .. n_steps; z holds the q x d martingale densities on steps
// 0 .. n_steps-1, flattened noise-major (entry i*q + j is component j
// against Brownian coordinate i).
struct BsdeSolution {
  PathMatrix y;
  PathMatrix z;
  double max_condition = 0.0;  // worst per-step Gram conditioning seen
};

// q x d view of one stored z entry
Eigen::Map<const Eigen::MatrixXd> z_view(const BsdeSolution& sol, int p, int k, int q, int d);

struct BsdeProblem {
  int q = 1;
  std::function<Eigen::VectorXd(int p)> terminal;  // per path, dim q
  // driver g(t_k) evaluated per path; z is the q x d density block.
  // Leave empty for a zero driver.
  std::function<Eigen::VectorXd(int k, int p, const Eigen::VectorXd& y, const Eigen::MatrixXd& z)>
      driver;
};

struct BsdeOptions {
  RegressionBasis basis;
  bool implicit = false;       // one extra driver evaluation at the fresh y_k
  bool deterministic = false;  // conditional expectation = cross-path mean, z = 0
  // raw regression coordinates per (path, node); required unless deterministic
  std::function<Eigen::VectorXd(int p, int k)> state_coords;
};

// Backward regression recursion:
//   z_k = E_k[y_{k+1} dW_k] / dt,   y_k = E_k[y_{k+1}] + g(t_k, y, z_k) dt,
// with the explicit variant feeding the raw y_{k+1} of the path into g and
// the implicit variant re-evaluating g once at the fresh y_k.
BsdeSolution solve_bsde(const BsdeProblem& prob, const BrownianBundle& W, const TimeGrid& grid,
                        const BsdeOptions& opt);

struct CostResult {
  double value = 0.0;      // cross-path mean of y(0)
  double spread = 0.0;     // cross-path standard deviation of y(0)
  double max_condition = 0.0;
};

// Cost of a control: solves the forward path, then the backward pair with
// terminal h and driver f, and reads off y(0).
CostResult cost_functional(const ModelSpec& m, const ControlProcess& u, const BrownianBundle& W,
                           const TimeGrid& grid, const BsdeOptions& opt);

// Same backward solve on an externally supplied forward path (reused by the
// variational and perturbed-system runs which share noise and controls).
CostResult cost_functional_on_path(const ModelSpec& m, const PathMatrix& x,
                                   const ControlProcess& u, const BrownianBundle& W,
                                   const TimeGrid& grid, const BsdeOptions& opt,
                                   BsdeSolution* out_solution = nullptr);

// Cost of a realized feedback run; the per-path control samples of the run
// feed the driver in place of a deterministic control profile.
CostResult cost_functional_feedback(const ModelSpec& m, const FeedbackRun& run,
                                    const BrownianBundle& W, const TimeGrid& grid,
                                    const BsdeOptions& opt, BsdeSolution* out_solution = nullptr);

// Default regression coordinates: the stacked delay block of x at each node.
std::function<Eigen::VectorXd(int p, int k)> delay_coords(const PathMatrix& x,
                                                          const TimeGrid& grid, double kappa);

}  // namespace sddelab
