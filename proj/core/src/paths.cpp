#include "sddelab/paths.hpp"

#include <cmath>

#include "sddelab/errors.hpp"
#include "sddelab/rng.hpp"

namespace sddelab {

BrownianBundle::BrownianBundle(const TimeGrid& grid, int n_paths, int d, std::uint64_t seed,
                               std::uint64_t path_salt)
    : grid_(grid), n_paths_(n_paths), d_(d), key_(seed), path_salt_(path_salt),
      sqrt_dt_(std::sqrt(grid.dt)) {
  if (n_paths < 1 || d < 1) throw DimensionMismatch("brownian bundle needs n_paths>=1, d>=1");
}

double BrownianBundle::dW(int p, int k, int i) const {
  return sqrt_dt_ *
         gaussian(key_, path_salt_ + static_cast<std::uint64_t>(p), static_cast<std::uint32_t>(k),
                  static_cast<std::uint32_t>(i));
}

Eigen::VectorXd BrownianBundle::dW_vec(int p, int k) const {
  Eigen::VectorXd out(d_);
  for (int i = 0; i < d_; ++i) out[i] = dW(p, k, i);
  return out;
}

PathMatrix sample_brownian(const BrownianBundle& bundle) {
  const TimeGrid& g = bundle.grid();
  PathMatrix out(bundle.n_paths(), 0, g.n_steps - 1, bundle.dim());
  for (int p = 0; p < bundle.n_paths(); ++p)
    for (int k = 0; k < g.n_steps; ++k)
      for (int i = 0; i < bundle.dim(); ++i) out.at(p, k, i) = bundle.dW(p, k, i);
  return out;
}

Eigen::VectorXd distributed_delay(const PathMatrix& x, int p, int k, const TimeGrid& grid,
                                  double kappa) {
  const int m = grid.m_delay;
  if (k - m < x.first_index)
    throw IndexUnderflow("distributed delay window reaches before stored history");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(x.dim);
  for (int j = 0; j < m; ++j) {
    const double theta = -grid.delta + j * grid.dt;
    acc += std::exp(kappa * theta) * x.vec(p, k - m + j);
  }
  return acc * grid.dt;
}

Eigen::VectorXd delay_features(const PathMatrix& x, int p, int k, const TimeGrid& grid,
                               double kappa) {
  const int n = x.dim;
  Eigen::VectorXd out(3 * n);
  if (k - grid.m_delay < x.first_index)
    throw IndexUnderflow("delay features need history back to k - m_delay");
  out.segment(0, n) = x.vec(p, k);
  out.segment(n, n) = x.vec(p, k - grid.m_delay);
  out.segment(2 * n, n) = distributed_delay(x, p, k, grid, kappa);
  return out;
}

}  // namespace sddelab
