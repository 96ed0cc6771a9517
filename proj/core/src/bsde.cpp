#include <cmath>
#include <string>

#include "sddelab/bsde.hpp"
#include "sddelab/errors.hpp"
#include "sddelab/forward.hpp"

namespace sddelab {

namespace {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

}  // namespace

Eigen::Map<const Mat> z_view(const BsdeSolution& sol, int p, int k, int q, int d) {
  return Eigen::Map<const Mat>(
      sol.z.values.data() +
          (static_cast<std::size_t>(p) * sol.z.node_count() + (k - sol.z.first_index)) * sol.z.dim,
      q, d);
}

BsdeSolution solve_bsde(const BsdeProblem& prob, const BrownianBundle& W, const TimeGrid& grid,
                        const BsdeOptions& opt) {
  const int q = prob.q, d = W.dim(), np = W.n_paths();
  if (q < 1 || !prob.terminal) throw ConfigInvalid("bsde: terminal required and q >= 1");
  if (!opt.deterministic && !opt.state_coords)
    throw ConfigInvalid("bsde: regression coordinates required outside deterministic mode");

  BsdeSolution sol;
  sol.y = PathMatrix(np, 0, grid.n_steps, q);
  sol.z = PathMatrix(np, 0, grid.n_steps - 1, q * d);
  for (int p = 0; p < np; ++p) {
    const Vec yT = prob.terminal(p);
    if (yT.size() != q) throw DimensionMismatch("bsde terminal has wrong dimension");
    sol.y.vec(p, grid.n_steps) = yT;
  }

  Vec target(np), fitted(np);
  for (int k = grid.n_steps - 1; k >= 0; --k) {
    // per-component conditional expectations share one factorization; in
    // deterministic mode the basis collapses to the constant, so the
    // projection is the plain cross-path mean
    ConditionalExpectation proj =
        opt.deterministic
            ? ConditionalExpectation(Mat::Ones(np, 1), 0.0)
            : make_step_projector([&](int p) { return opt.state_coords(p, k); }, np, opt.basis);
    sol.max_condition = std::max(sol.max_condition, proj.condition_estimate());

    // z extraction by increment regression (skipped in deterministic mode)
    if (!opt.deterministic) {
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < q; ++j) {
          for (int p = 0; p < np; ++p) target[p] = sol.y.at(p, k + 1, j) * W.dW(p, k, i);
          fitted = proj.project(target);
          for (int p = 0; p < np; ++p) sol.z.at(p, k, i * q + j) = fitted[p] / grid.dt;
        }
    }

    // continuation value per component
    for (int j = 0; j < q; ++j) {
      for (int p = 0; p < np; ++p) target[p] = sol.y.at(p, k + 1, j);
      fitted = proj.project(target);
      for (int p = 0; p < np; ++p) sol.y.at(p, k, j) = fitted[p];
    }

    if (prob.driver) {
      for (int p = 0; p < np; ++p) {
        const Eigen::Map<const Mat> zk(sol.z.vec(p, k).data(), q, d);
        Vec g = prob.driver(k, p, Vec(sol.y.vec(p, k + 1)), zk);
        if (g.size() != q) throw DimensionMismatch("bsde driver has wrong dimension");
        if (opt.implicit) {
          const Vec y_try = sol.y.vec(p, k) + grid.dt * g;
          g = prob.driver(k, p, y_try, zk);
          if (g.size() != q) throw DimensionMismatch("bsde driver has wrong dimension");
        }
        sol.y.vec(p, k) += grid.dt * g;
      }
    }
    for (int p = 0; p < np; ++p)
      if (!sol.y.vec(p, k).allFinite())
        throw NonFinite("bsde value not finite at node " + std::to_string(k));
  }
  return sol;
}

std::function<Vec(int p, int k)> delay_coords(const PathMatrix& x, const TimeGrid& grid,
                                              double kappa) {
  return [&x, grid, kappa](int p, int k) { return delay_features(x, p, k, grid, kappa); };
}

namespace {

// shared tail of the cost overloads: solve the scalar backward pair on the
// given forward path with per-(path, node) control lookups, then summarize
// the cross-path distribution of y(0)
CostResult run_cost_backward(const ModelSpec& m, const PathMatrix& x,
                             const std::function<Vec(int p, int k)>& u_at,
                             const BrownianBundle& W, const TimeGrid& grid,
                             const BsdeOptions& opt, BsdeSolution* out_solution) {
  BsdeProblem prob;
  prob.q = 1;
  prob.terminal = [&](int p) {
    return Vec::Constant(1, m.h(delay_features(x, p, grid.n_steps, grid, m.kappa)));
  };
  prob.driver = [&](int k, int p, const Vec& y, const Mat& z) {
    const Vec X = delay_features(x, p, k, grid, m.kappa);
    return Vec::Constant(1, m.f(grid.time(k), X, y[0], z.row(0).transpose(), u_at(p, k),
                                u_at(p, k - grid.m_delay)));
  };
  BsdeOptions local = opt;
  if (!local.state_coords) local.state_coords = delay_coords(x, grid, m.kappa);
  BsdeSolution sol = solve_bsde(prob, W, grid, local);

  CostResult res;
  res.max_condition = sol.max_condition;
  double acc = 0.0, acc2 = 0.0;
  for (int p = 0; p < sol.y.n_paths; ++p) {
    const double v = sol.y.at(p, 0, 0);
    acc += v;
    acc2 += v * v;
  }
  res.value = acc / sol.y.n_paths;
  res.spread = std::sqrt(std::max(0.0, acc2 / sol.y.n_paths - res.value * res.value));
  if (out_solution) *out_solution = std::move(sol);
  return res;
}

}  // namespace

CostResult cost_functional_on_path(const ModelSpec& m, const PathMatrix& x,
                                   const ControlProcess& u, const BrownianBundle& W,
                                   const TimeGrid& grid, const BsdeOptions& opt,
                                   BsdeSolution* out_solution) {
  return run_cost_backward(
      m, x, [&u](int, int k) { return u.at(k); }, W, grid, opt, out_solution);
}

CostResult cost_functional_feedback(const ModelSpec& m, const FeedbackRun& run,
                                    const BrownianBundle& W, const TimeGrid& grid,
                                    const BsdeOptions& opt, BsdeSolution* out_solution) {
  return run_cost_backward(
      m, run.x, [&run](int p, int k) { return Vec(run.u.vec(p, k)); }, W, grid, opt,
      out_solution);
}

CostResult cost_functional(const ModelSpec& m, const ControlProcess& u, const BrownianBundle& W,
                           const TimeGrid& grid, const BsdeOptions& opt) {
  const PathMatrix x = simulate_sdde(m, u, W, grid);
  return cost_functional_on_path(m, x, u, W, grid, opt, nullptr);
}

}  // namespace sddelab
