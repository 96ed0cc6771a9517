#include <cmath>

#include "sddelab/errors.hpp"
#include "sddelab/regression.hpp"

namespace sddelab {

int basis_size(int dim, int degree) {
  if (dim < 1 || degree < 0 || degree > 2)
    throw ConfigInvalid("basis: need dim >= 1 and degree in {0, 1, 2}");
  int q = 1;
  if (degree >= 1) q += dim;
  if (degree >= 2) q += dim * (dim + 1) / 2;
  return q;
}

Eigen::VectorXd basis_features(const Eigen::VectorXd& coords, int degree) {
  const int dim = static_cast<int>(coords.size());
  Eigen::VectorXd out(basis_size(dim, degree));
  int idx = 0;
  out[idx++] = 1.0;
  if (degree >= 1)
    for (int i = 0; i < dim; ++i) out[idx++] = coords[i];
  if (degree >= 2)
    for (int i = 0; i < dim; ++i)
      for (int j = i; j < dim; ++j) out[idx++] = coords[i] * coords[j];
  return out;
}

ConditionalExpectation::ConditionalExpectation(Eigen::MatrixXd features, double ridge)
    : phi_(std::move(features)) {
  if (phi_.rows() < 1 || phi_.cols() < 1)
    throw DimensionMismatch("regression needs at least one path and one feature");
  if (!(ridge >= 0.0)) throw ConfigInvalid("regression ridge must be nonnegative");
  Eigen::MatrixXd gram = phi_.transpose() * phi_;
  gram.diagonal().array() += ridge;
  gram_.compute(gram);
  const Eigen::VectorXd d = gram_.vectorD();
  const double dmax = d.cwiseAbs().maxCoeff();
  const double dmin = d.cwiseAbs().minCoeff();
  if (gram_.info() != Eigen::Success || !(dmin > 0.0) || dmin < 1e-14 * dmax)
    throw SingularRegression("step Gram matrix rank-deficient beyond ridge repair");
  cond_ = dmax / dmin;
}

Eigen::VectorXd ConditionalExpectation::coefficients(const Eigen::VectorXd& target) const {
  if (target.size() != phi_.rows())
    throw DimensionMismatch("regression target length != path count");
  return gram_.solve(phi_.transpose() * target);
}

Eigen::VectorXd ConditionalExpectation::project(const Eigen::VectorXd& target) const {
  return phi_ * coefficients(target);
}

ConditionalExpectation make_step_projector(const std::function<Eigen::VectorXd(int p)>& coords,
                                           int n_paths, const RegressionBasis& basis) {
  if (n_paths < 1) throw DimensionMismatch("projector needs at least one path");
  const Eigen::VectorXd first = basis_features(coords(0), basis.degree);
  Eigen::MatrixXd phi(n_paths, first.size());
  phi.row(0) = first;
  for (int p = 1; p < n_paths; ++p) phi.row(p) = basis_features(coords(p), basis.degree);
  return ConditionalExpectation(std::move(phi), basis.ridge_scale * n_paths);
}

}  // namespace sddelab
