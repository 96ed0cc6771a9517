#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "sddelab/grid.hpp"

namespace sddelab {

// Version stamp written into every golden file so a regenerated reference is
// distinguishable from the frozen one.
inline constexpr double kOracleVersion = 1.0;

// ---------------------------------------------------------------------------
// Linear-quadratic closed form.
//
// dx = (A x + B u) dt + (C x + D u + sigma_bar) dW,  scalar W,
// cost E[ integral (x'Qx + u'Ru) dt + x(T)'G x(T) ].
// Backward Riccati equation (no 1/2 convention):
//   P' + A'P + PA + C'PC + Q - (PB + C'PD)(R + D'PD)^{-1}(B'P + D'PC) = 0,
//   P(T) = G,  gain K = (R + D'PD)^{-1}(B'P + D'PC),  u* = -K x.
// A constant diffusion offset sigma_bar is only supported with C = D = 0
// (otherwise the value function stops being purely quadratic); it adds
// integral sigma_bar'P sigma_bar to the optimal value.
// ---------------------------------------------------------------------------
struct LQParams {
  Eigen::MatrixXd A, B, C, D, Q, R, G;
  Eigen::VectorXd x0;
  Eigen::VectorXd sigma_bar;  // empty or zero unless C = D = 0
  double T = 1.0;
};

struct LQSolution {
  double dt_oracle = 0.0;
  std::vector<double> t;               // oracle grid, ascending
  std::vector<Eigen::MatrixXd> P;      // Riccati path on the oracle grid
  std::vector<Eigen::MatrixXd> K;      // feedback gains, u* = -K(t) x
  double value = 0.0;                  // J* at x0

  const Eigen::MatrixXd& P_at(double time) const;
  const Eigen::MatrixXd& K_at(double time) const;

 private:
  int index_of(double time) const;
};

// dt is the caller's grid step; the Riccati ODE is integrated by classical
// RK4 at dt/16.
LQSolution lq_closed_form(const LQParams& params, double dt);

// ---------------------------------------------------------------------------
// Method of steps for the linear delay ODE
//   x'(t) = a0 x(t) + a1 x(t - delta),  x(t) = xi(t) on [-delta, 0],
// integrated by RK4 at dt/64 with cubic-Hermite lookup of the delayed value.
// Steps are aligned with multiples of delta, so every kink sits on a node.
// xi must be continuous with xi(0) equal to the starting value.
// ---------------------------------------------------------------------------
struct StepsPath {
  double dt_fine = 0.0;
  std::vector<double> t;   // 0 .. T on the fine grid
  std::vector<double> x;
  double at(double time) const;  // node lookup, throws if time is off-grid
};

StepsPath method_of_steps_ode(double a0, double a1, double delta, double T,
                              const std::function<double(double)>& xi, double dt);

// Fundamental solution of the same delay ODE: phi(0) = 1, phi(theta) = 0 for
// theta < 0. Returned as phi(tau); the two-sided kernel is Phi(T, s) =
// phi(T - s). The value jump at 0 makes phi' jump at delta, which the stepper
// handles by one-sided history lookups at the switch node.
StepsPath delayed_fundamental(double a0, double a1, double delta, double T, double dt);

// ---------------------------------------------------------------------------
// Delayed linear-quadratic control with terminal-only state cost:
//   dx = (a0 x + b0 u(t) + b1 u(t - delta)) dt + sigma dW,
//   J = E[ integral r u^2 dt + g x(T) ].
// J is linear in the control's effect on x(T), so the pointwise minimizer is
//   u*(t) = -(g / 2r) psi(t),  psi(t) = Phi(T,t) b0 + Phi(T,t+delta) b1
// (second term only while t + delta <= T), with Phi the fundamental solution
// above. Exact for any a1 and any adapted competitor.
// ---------------------------------------------------------------------------
struct DelayedLQParams {
  double a0 = 0.0, a1 = 0.0;  // drift on x(t), x(t - delta)
  double b0 = 0.0, b1 = 0.0;  // drift on u(t), u(t - delta)
  double r = 1.0;             // running control cost weight (> 0)
  double g = 0.0;             // terminal weight on x(T)
};

struct DelayedLQControl {
  std::vector<double> u;    // optimal control at t_0 .. t_{n_steps-1}
  std::vector<double> psi;  // sensitivity kernel at the same nodes
};

DelayedLQControl delayed_lq_control(const DelayedLQParams& params, const TimeGrid& grid);

// ---------------------------------------------------------------------------
// Exhaustive dynamic programming on a scenario tree. Discrete dynamics
//   x_{k+1} = x_k + drift(...) dt + vol(...) sqrt(dt) * shock,
// shocks binomial (+-1, equal weights) or trinomial (+-sqrt(3), 0 with
// weights 1/6, 2/3, 1/6), control chosen from a finite set each step, cost
//   sum run_cost(...) dt + terminal(x_N, x_{N-m}).
// Delay enters through x_{k-m} and u_{k-m}; pre-horizon values come from the
// xi ring and u_init. Backward induction enumerates every (control, shock)
// history, so the optimum is exact for the discrete problem.
// ---------------------------------------------------------------------------
struct DpModel {
  int n_steps = 1;
  int branching = 2;
  int m_delay = 0;
  double dt = 1.0;
  double x0 = 0.0;
  double u_init = 0.0;          // control value attributed to steps < 0
  std::vector<double> xi;       // states at steps -m_delay .. -1 (size m_delay)
  std::vector<double> controls; // finite control set, size <= 5
  std::function<double(int k, double x, double xd, double u, double mu)> drift;
  std::function<double(int k, double x, double xd, double u, double mu)> vol;
  std::function<double(int k, double x, double xd, double u, double mu)> run_cost;
  std::function<double(double xT, double xT_delay)> terminal;
};

// Policy maps the shock history observed so far (empty at the root) to the
// control chosen there along the optimal strategy.
struct DpSolution {
  double value = 0.0;
  std::map<std::vector<int>, double> policy;
};

// reverse_enumeration flips the order controls are scanned in; values must
// agree either way, which guards against order-dependent bookkeeping bugs.
DpSolution dp_scenario_tree(const DpModel& model, bool reverse_enumeration = false);

// Expected cost of an explicit policy (used for optimality certificates:
// single-node perturbations of the DP policy may never decrease this).
double dp_policy_cost(const DpModel& model, const std::map<std::vector<int>, double>& policy);

}  // namespace sddelab
