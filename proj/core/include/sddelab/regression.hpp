#pragma once
#include <Eigen/Dense>
#include <functional>

namespace sddelab {

// Polynomial regression settings for the numerical conditional expectation.
// Features are monomials of the stacked delay coordinates up to the given
// total degree (constant always included); the ridge grows with the path
// count so the normal equations stay scaled.
struct RegressionBasis {
  int degree = 2;
  double ridge_scale = 1e-8;  // actual ridge = ridge_scale * n_paths
};

// number of monomials of total degree <= degree over dim coordinates
// (degrees 0, 1, 2 supported)
int basis_size(int dim, int degree);

// monomial features of one coordinate vector, constant first
Eigen::VectorXd basis_features(const Eigen::VectorXd& coords, int degree);

// Cross-path least squares at one time step. The Gram factorization is
// built once and reused for every projected target, which is what keeps the
// Volterra solves (one target per outer time index) affordable.
class ConditionalExpectation {
 public:
  // features: one row per path. Throws SingularRegression when the ridge
  // cannot rescue the normal equations.
  ConditionalExpectation(Eigen::MatrixXd features, double ridge);

  // fitted conditional-expectation values per path
  Eigen::VectorXd project(const Eigen::VectorXd& target_per_path) const;
  // regression coefficients alone (for inspecting the fitted map)
  Eigen::VectorXd coefficients(const Eigen::VectorXd& target_per_path) const;

  double condition_estimate() const { return cond_; }
  int n_paths() const { return static_cast<int>(phi_.rows()); }

 private:
  Eigen::MatrixXd phi_;
  Eigen::LDLT<Eigen::MatrixXd> gram_;
  double cond_ = 0.0;
};

// Builds the per-step projector from a feature provider (raw coordinates per
// path, typically the stacked delay block of the forward solution).
ConditionalExpectation make_step_projector(
    const std::function<Eigen::VectorXd(int p)>& coords, int n_paths,
    const RegressionBasis& basis);

}  // namespace sddelab
