#include <cmath>

#include "sddelab/errors.hpp"
#include "sddelab/gamma.hpp"

namespace sddelab {

GammaPath doleans_gamma(const PathMatrix& fy, const PathMatrix& fz, const BrownianBundle& W,
                        const TimeGrid& grid) {
  const int np = W.n_paths(), d = W.dim(), n = grid.n_steps;
  if (fy.dim != 1 || fz.dim != d) throw DimensionMismatch("gamma: fy must be scalar, fz d-dim");
  if (fy.n_paths != np || fz.n_paths != np)
    throw DimensionMismatch("gamma: path counts disagree with the bundle");
  if (fy.first_index > 0 || fy.last_index < n - 1 || fz.first_index > 0 || fz.last_index < n - 1)
    throw DimensionMismatch("gamma: derivative paths must cover steps 0 .. n_steps-1");

  GammaPath g;
  g.log_drift = PathMatrix(np, 0, n, 1);
  g.log_mart = PathMatrix(np, 0, n, 1);
  g.value = PathMatrix(np, 0, n, 1);
  for (int p = 0; p < np; ++p) {
    double drift = 0.0, mart = 0.0;
    g.value.at(p, 0, 0) = 1.0;
    for (int k = 0; k < n; ++k) {
      drift += fy.at(p, k, 0) * grid.dt;
      double dot = 0.0, sq = 0.0;
      for (int i = 0; i < d; ++i) {
        const double c = fz.at(p, k, i);
        dot += c * W.dW(p, k, i);
        sq += c * c;
      }
      mart += dot - 0.5 * sq * grid.dt;
      g.log_drift.at(p, k + 1, 0) = drift;
      g.log_mart.at(p, k + 1, 0) = mart;
      const double v = std::exp(drift + mart);
      if (!std::isfinite(v)) throw NonFinite("gamma overflow at node " + std::to_string(k + 1));
      g.value.at(p, k + 1, 0) = v;
    }
  }
  return g;
}

GammaPath doleans_gamma_from_model(const ModelSpec& m, const PathMatrix& x,
                                   const ControlProcess& u, const BsdeSolution* yz,
                                   const BrownianBundle& W, const TimeGrid& grid) {
  const int np = W.n_paths(), d = W.dim(), n = grid.n_steps;
  PathMatrix fy(np, 0, n - 1, 1), fz(np, 0, n - 1, d);
  for (int p = 0; p < np; ++p)
    for (int k = 0; k < n; ++k) {
      const Eigen::VectorXd X = delay_features(x, p, k, grid, m.kappa);
      const double yv = yz ? yz->y.at(p, k, 0) : 0.0;
      Eigen::VectorXd zv = Eigen::VectorXd::Zero(d);
      if (yz)
        for (int i = 0; i < d; ++i) zv[i] = yz->z.at(p, k, i);
      const double t = grid.time(k);
      fy.at(p, k, 0) = eval_f_y(m, t, X, yv, zv, u.at(k), u.at(k - grid.m_delay));
      fz.vec(p, k) = eval_f_z(m, t, X, yv, zv, u.at(k), u.at(k - grid.m_delay));
    }
  return doleans_gamma(fy, fz, W, grid);
}

const GaussLegendre8& gauss_legendre_8() {
  // nodes/weights for [0, 1], mapped from the standard [-1, 1] table
  static const GaussLegendre8 rule = [] {
    const std::array<double, 4> xs = {0.1834346424956498, 0.5255324099163290,
                                      0.7966664774136267, 0.9602898564975363};
    const std::array<double, 4> ws = {0.3626837833783620, 0.3137066458778873,
                                      0.2223810344533745, 0.1012285362903763};
    GaussLegendre8 r{};
    for (int i = 0; i < 4; ++i) {
      r.node[i] = 0.5 * (1.0 - xs[3 - i]);
      r.node[4 + i] = 0.5 * (1.0 + xs[i]);
      r.weight[i] = 0.5 * ws[3 - i];
      r.weight[4 + i] = 0.5 * ws[i];
    }
    return r;
  }();
  return rule;
}

}  // namespace sddelab
