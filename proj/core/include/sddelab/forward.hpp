#pragma once
#include <functional>

#include "sddelab/grid.hpp"
#include "sddelab/model.hpp"
#include "sddelab/paths.hpp"

namespace sddelab {

// Explicit left-point Euler recursion for the controlled delay SDE. Output
// holds the state on nodes -m_delay .. n_steps; nodes k <= 0 carry the
// initial segment xi(t_k). All coefficient arguments (state, both delay
// features, control and delayed control) are read at the left node, so the
// scheme is adapted by construction. Throws NonFinite naming the earliest
// bad node.
PathMatrix simulate_sdde(const ModelSpec& m, const ControlProcess& u, const BrownianBundle& W,
                         const TimeGrid& grid);

// Same recursion driven by precomputed increments (dW on steps
// 0 .. n_steps-1). Convergence ladders aggregate fine increments onto a
// coarse grid and feed them through here so every level sees the same noise.
PathMatrix simulate_sdde(const ModelSpec& m, const ControlProcess& u, const PathMatrix& dW,
                         const TimeGrid& grid);

// Sum of fine-bundle increments over each coarse step. The coarse node count
// must divide the fine one.
PathMatrix aggregate_increments(const BrownianBundle& fine, const TimeGrid& coarse);

// State-feedback run: the policy maps (node index, current state) to a
// control value per path. Realized controls are returned next to the state
// so downstream evaluations reuse exactly what drove the dynamics; negative
// indices hold gamma_init and feed the delayed-control slot.
struct FeedbackRun {
  PathMatrix x;  // nodes -m_delay .. n_steps
  PathMatrix u;  // nodes -m_delay .. n_steps-1
};
FeedbackRun simulate_feedback(
    const ModelSpec& m,
    const std::function<Eigen::VectorXd(int k, const Eigen::VectorXd& x)>& policy,
    const BrownianBundle& W, const TimeGrid& grid);

// Largest window length r for which the declared contraction estimate
//   2^beta * 3^(beta+1) * k1^beta * (r^beta + r^(beta/2)) < 1    (beta = 2)
// holds. Window lengths above this are refused by picard_splice_solve.
double picard_max_window(const ModelSpec& m);

// Window-by-window fixed-point construction of the same discrete solution:
// on each window of length eps0 the candidate path is remapped by the Euler
// step evaluated at the candidate's features until it stops moving, then the
// window is frozen and the next one spliced on. Agrees with simulate_sdde
// exactly once converged. eps0 must be a grid multiple in (0, T] passing the
// contraction estimate; otherwise NoConvergence is thrown up front.
PathMatrix picard_splice_solve(const ModelSpec& m, const ControlProcess& u,
                               const BrownianBundle& W, const TimeGrid& grid, double eps0,
                               int max_iter, double tol);

// Monte Carlo estimate of E[ sup_k |x_c(t_k) - x_f(t_k)|^beta ] over the
// nodes k >= 0 of the coarse path, with the fine path restricted to coarse
// nodes (fine node count must be an integer multiple).
double strong_error(const PathMatrix& x_coarse, const PathMatrix& x_fine, double beta);

}  // namespace sddelab
