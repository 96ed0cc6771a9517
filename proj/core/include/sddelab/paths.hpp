#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "sddelab/grid.hpp"

namespace sddelab {

// Dense storage for one scalar-or-vector quantity sampled on the grid nodes
// of many Monte Carlo paths. Node index k runs from first_index (usually
// -m_delay, covering the initial segment) to last_index inclusive.
struct PathMatrix {
  int n_paths = 0;
  int first_index = 0;
  int last_index = 0;
  int dim = 0;
  std::vector<double> values;

  PathMatrix() = default;
  PathMatrix(int paths, int first, int last, int d)
      : n_paths(paths), first_index(first), last_index(last), dim(d),
        values(static_cast<std::size_t>(paths) * (last - first + 1) * d, 0.0) {}

  int node_count() const { return last_index - first_index + 1; }

  double& at(int p, int k, int c) {
    return values[(static_cast<std::size_t>(p) * node_count() + (k - first_index)) * dim + c];
  }
  double at(int p, int k, int c) const {
    return values[(static_cast<std::size_t>(p) * node_count() + (k - first_index)) * dim + c];
  }

  Eigen::Map<Eigen::VectorXd> vec(int p, int k) {
    return Eigen::Map<Eigen::VectorXd>(
        values.data() + (static_cast<std::size_t>(p) * node_count() + (k - first_index)) * dim,
        dim);
  }
  Eigen::Map<const Eigen::VectorXd> vec(int p, int k) const {
    return Eigen::Map<const Eigen::VectorXd>(
        values.data() + (static_cast<std::size_t>(p) * node_count() + (k - first_index)) * dim,
        dim);
  }
};

// Brownian increments for n_paths paths of a d-dimensional motion on the
// grid. Generated lazily from a counter RNG, so two bundles with the same
// (seed, salt) agree bit for bit regardless of evaluation order; that is what
// lets a coarse grid reuse the noise of a fine grid by summing increments.
class BrownianBundle {
 public:
  BrownianBundle(const TimeGrid& grid, int n_paths, int d, std::uint64_t seed,
                 std::uint64_t path_salt = 0);

  // Increment W_i(t_{k+1}) - W_i(t_k) for step k in [0, n_steps).
  double dW(int p, int k, int i) const;
  Eigen::VectorXd dW_vec(int p, int k) const;

  const TimeGrid& grid() const { return grid_; }
  int n_paths() const { return n_paths_; }
  int dim() const { return d_; }

 private:
  TimeGrid grid_;
  int n_paths_;
  int d_;
  std::uint64_t key_;
  std::uint64_t path_salt_;
  double sqrt_dt_;
};

// Materialize all increments of a bundle into a PathMatrix indexed by step
// k in [0, n_steps). Handy for solvers that sweep the same noise repeatedly.
PathMatrix sample_brownian(const BrownianBundle& bundle);

// Left-rectangle discretization of the exponentially weighted running
// integral of x over the trailing delay window at node k:
//   sum_{j=0}^{m-1} exp(kappa * theta_j) * x(t_k + theta_j) * dt,
// with theta_j = -delta + j * dt. Uses nodes k-m .. k-1, so k-m must not
// fall below first_index.
Eigen::VectorXd distributed_delay(const PathMatrix& x, int p, int k, const TimeGrid& grid,
                                  double kappa);

// Convenience: the triple (x(t_k), x(t_k - delta), weighted integral) stacked
// as a 3n vector, which is the state block every coefficient consumes.
Eigen::VectorXd delay_features(const PathMatrix& x, int p, int k, const TimeGrid& grid,
                               double kappa);

}  // namespace sddelab
