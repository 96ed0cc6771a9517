#include <cmath>
#include <string>

#include "sddelab/errors.hpp"
#include "sddelab/forward.hpp"

namespace sddelab {

namespace {

using Vec = Eigen::VectorXd;

void check_control_range(const ControlProcess& u, const TimeGrid& grid) {
  if (u.first_index > -grid.m_delay || u.last_index() < grid.n_steps - 1)
    throw DimensionMismatch("control does not cover indices -m_delay .. n_steps-1");
}

// one Euler step at node k reading features from x itself
void euler_step(const ModelSpec& m, const TimeGrid& grid, PathMatrix& x, int p, int k,
                const Vec& u_k, const Vec& mu_k, const Vec& dw) {
  const Vec X = delay_features(x, p, k, grid, m.kappa);
  const double t = grid.time(k);
  const Vec drift = m.b(t, X, u_k, mu_k);
  const Eigen::MatrixXd vol = m.sigma(t, X, u_k, mu_k);
  if (drift.size() != m.n || vol.rows() != m.n || vol.cols() != m.d)
    throw DimensionMismatch("coefficient output shape mismatch in forward step");
  x.vec(p, k + 1) = x.vec(p, k) + drift * grid.dt + vol * dw;
}

void fill_initial_segment(const ModelSpec& m, const TimeGrid& grid, PathMatrix& x) {
  for (int k = -grid.m_delay; k <= 0; ++k) {
    const Vec v = m.xi(grid.time(k));
    if (v.size() != m.n) throw DimensionMismatch("xi returned wrong dimension");
    for (int p = 0; p < x.n_paths; ++p) x.vec(p, k) = v;
  }
}

void check_finite(const PathMatrix& x, int p, int k) {
  if (!x.vec(p, k).allFinite())
    throw NonFinite("state not finite at path " + std::to_string(p) + ", node " +
                    std::to_string(k));
}

PathMatrix run_euler(const ModelSpec& m, const ControlProcess& u, const TimeGrid& grid,
                     int n_paths, const std::function<Vec(int p, int k)>& incr) {
  check_control_range(u, grid);
  PathMatrix x(n_paths, -grid.m_delay, grid.n_steps, m.n);
  fill_initial_segment(m, grid, x);
  for (int p = 0; p < n_paths; ++p) {
    for (int k = 0; k < grid.n_steps; ++k) {
      euler_step(m, grid, x, p, k, u.at(k), u.at(k - grid.m_delay), incr(p, k));
      check_finite(x, p, k + 1);
    }
  }
  return x;
}

}  // namespace

PathMatrix simulate_sdde(const ModelSpec& m, const ControlProcess& u, const BrownianBundle& W,
                         const TimeGrid& grid) {
  if (W.dim() != m.d) throw DimensionMismatch("bundle dimension != model noise dimension");
  if (W.grid().n_steps != grid.n_steps)
    throw DimensionMismatch("bundle grid does not match simulation grid");
  return run_euler(m, u, grid, W.n_paths(), [&](int p, int k) { return W.dW_vec(p, k); });
}

PathMatrix simulate_sdde(const ModelSpec& m, const ControlProcess& u, const PathMatrix& dW,
                         const TimeGrid& grid) {
  if (dW.dim != m.d) throw DimensionMismatch("increment dimension != model noise dimension");
  if (dW.first_index > 0 || dW.last_index < grid.n_steps - 1)
    throw DimensionMismatch("increments do not cover steps 0 .. n_steps-1");
  return run_euler(m, u, grid, dW.n_paths,
                   [&](int p, int k) { return Vec(dW.vec(p, k)); });
}

PathMatrix aggregate_increments(const BrownianBundle& fine, const TimeGrid& coarse) {
  const TimeGrid& fg = fine.grid();
  if (coarse.n_steps < 1 || fg.n_steps % coarse.n_steps != 0)
    throw NonAlignedHorizon("coarse step count does not divide the fine one");
  const int ratio = fg.n_steps / coarse.n_steps;
  PathMatrix out(fine.n_paths(), 0, coarse.n_steps - 1, fine.dim());
  for (int p = 0; p < out.n_paths; ++p)
    for (int k = 0; k < coarse.n_steps; ++k) {
      Vec acc = Vec::Zero(fine.dim());
      for (int j = 0; j < ratio; ++j) acc += fine.dW_vec(p, k * ratio + j);
      out.vec(p, k) = acc;
    }
  return out;
}

FeedbackRun simulate_feedback(
    const ModelSpec& m,
    const std::function<Eigen::VectorXd(int k, const Eigen::VectorXd& x)>& policy,
    const BrownianBundle& W, const TimeGrid& grid) {
  if (W.dim() != m.d) throw DimensionMismatch("bundle dimension != model noise dimension");
  FeedbackRun run;
  run.x = PathMatrix(W.n_paths(), -grid.m_delay, grid.n_steps, m.n);
  run.u = PathMatrix(W.n_paths(), -grid.m_delay, grid.n_steps - 1, m.k_ctrl);
  fill_initial_segment(m, grid, run.x);
  for (int k = -grid.m_delay; k < 0; ++k) {
    const Vec g = m.gamma_init(grid.time(k));
    if (g.size() != m.k_ctrl) throw DimensionMismatch("gamma_init returned wrong dimension");
    for (int p = 0; p < run.u.n_paths; ++p) run.u.vec(p, k) = g;
  }
  for (int p = 0; p < run.x.n_paths; ++p) {
    for (int k = 0; k < grid.n_steps; ++k) {
      const Vec uk = policy(k, run.x.vec(p, k));
      if (uk.size() != m.k_ctrl) throw DimensionMismatch("policy returned wrong dimension");
      run.u.vec(p, k) = uk;
      euler_step(m, grid, run.x, p, k, uk, run.u.vec(p, k - grid.m_delay), W.dW_vec(p, k));
      check_finite(run.x, p, k + 1);
    }
  }
  return run;
}

double picard_max_window(const ModelSpec& m) {
  // solve 108 k1^2 (r^2 + r) = 1 for r > 0
  const double c = 108.0 * m.k1 * m.k1;
  return 0.5 * (std::sqrt(1.0 + 4.0 / c) - 1.0);
}

PathMatrix picard_splice_solve(const ModelSpec& m, const ControlProcess& u,
                               const BrownianBundle& W, const TimeGrid& grid, double eps0,
                               int max_iter, double tol) {
  check_control_range(u, grid);
  if (W.dim() != m.d) throw DimensionMismatch("bundle dimension != model noise dimension");
  if (!(tol > 0.0) || max_iter < 1) throw ConfigInvalid("picard: need tol > 0 and max_iter >= 1");
  const double ratio = eps0 / grid.dt;
  const int w = static_cast<int>(std::llround(ratio));
  if (w < 1 || std::abs(ratio - w) > 1e-9 * std::max(1.0, ratio) || eps0 > grid.T + 1e-12)
    throw EpsNotAligned("picard window must be a grid multiple in (0, T]");
  const double factor = 4.0 * 27.0 * std::pow(m.k1, 2.0) * (eps0 * eps0 + eps0);
  if (!(factor < 1.0))
    throw NoConvergence("picard window fails the contraction estimate: factor " +
                        std::to_string(factor) + " >= 1; shrink eps0 below " +
                        std::to_string(picard_max_window(m)));

  PathMatrix x(W.n_paths(), -grid.m_delay, grid.n_steps, m.n);
  fill_initial_segment(m, grid, x);
  std::vector<Vec> fresh;  // remapped window values per iteration
  for (int p = 0; p < x.n_paths; ++p) {
    for (int k_lo = 0; k_lo < grid.n_steps; k_lo += w) {
      const int k_hi = std::min(k_lo + w, grid.n_steps);
      // start the candidate frozen at the window's left value
      for (int k = k_lo + 1; k <= k_hi; ++k) x.vec(p, k) = x.vec(p, k_lo);
      bool settled = false;
      for (int it = 0; it < max_iter && !settled; ++it) {
        fresh.assign(k_hi - k_lo, Vec());
        Vec cur = x.vec(p, k_lo);
        for (int k = k_lo; k < k_hi; ++k) {
          // coefficients read the candidate path; the running value cur
          // carries the remapped recursion
          const Vec X = delay_features(x, p, k, grid, m.kappa);
          const double t = grid.time(k);
          cur = cur + m.b(t, X, u.at(k), u.at(k - grid.m_delay)) * grid.dt +
                m.sigma(t, X, u.at(k), u.at(k - grid.m_delay)) * W.dW_vec(p, k);
          fresh[k - k_lo] = cur;
        }
        double moved = 0.0;
        for (int k = k_lo + 1; k <= k_hi; ++k) {
          moved = std::max(moved, (fresh[k - 1 - k_lo] - x.vec(p, k)).cwiseAbs().maxCoeff());
          x.vec(p, k) = fresh[k - 1 - k_lo];
        }
        if (!x.vec(p, k_hi).allFinite())
          throw NonFinite("picard iterate not finite at path " + std::to_string(p) + ", node " +
                          std::to_string(k_hi));
        settled = moved < tol;
      }
      if (!settled)
        throw NoConvergence("picard window starting at node " + std::to_string(k_lo) +
                            " did not settle in " + std::to_string(max_iter) + " iterations");
    }
  }
  return x;
}

double strong_error(const PathMatrix& x_coarse, const PathMatrix& x_fine, double beta) {
  if (x_coarse.n_paths != x_fine.n_paths || x_coarse.dim != x_fine.dim)
    throw DimensionMismatch("strong_error: path sets are not comparable");
  if (x_coarse.last_index < 1 || x_fine.last_index % x_coarse.last_index != 0)
    throw NonAlignedHorizon("strong_error: fine nodes do not nest into coarse ones");
  if (!(beta > 0.0)) throw ConfigInvalid("strong_error: beta must be positive");
  const int ratio = x_fine.last_index / x_coarse.last_index;
  double acc = 0.0;
  for (int p = 0; p < x_coarse.n_paths; ++p) {
    double sup = 0.0;
    for (int k = 0; k <= x_coarse.last_index; ++k)
      sup = std::max(sup, (x_coarse.vec(p, k) - x_fine.vec(p, k * ratio)).norm());
    acc += std::pow(sup, beta);
  }
  return acc / x_coarse.n_paths;
}

}  // namespace sddelab
