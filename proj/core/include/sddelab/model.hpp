#pragma once
#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "sddelab/grid.hpp"
#include "sddelab/paths.hpp"

namespace sddelab {

// Admissible control values: either a box [lo, hi] in R^k or a finite list.
struct ControlSet {
  bool is_box = true;
  Eigen::VectorXd lo, hi;                 // box bounds (is_box)
  std::vector<Eigen::VectorXd> points;    // finite set (!is_box)

  bool contains(const Eigen::VectorXd& u, double tol = 1e-12) const;
  // candidate values for scans: the finite set itself, or a uniform grid with
  // points_per_dim nodes per axis of the box
  std::vector<Eigen::VectorXd> candidates(int points_per_dim) const;
};

enum class Regime { General, Affine, DeterministicAffine };

// A control problem instance. State x in R^n, noise W in R^d, control in
// R^k_ctrl. Coefficients consume the stacked delay block X = [x; x_delta;
// x_tilde] in R^{3n}; the scalar backward component y has driver f and
// terminal h. Derivative evaluators are optional: when absent, central finite
// differences of the coefficient evaluators are used instead.
struct ModelSpec {
  std::string name;
  int n = 1, d = 1, k_ctrl = 1;
  double T = 1.0, delta = 0.25, kappa = 0.0;

  std::function<Eigen::VectorXd(double)> xi;          // initial path on [-delta, 0]
  std::function<Eigen::VectorXd(double)> gamma_init;  // initial control on [-delta, 0)

  std::function<Eigen::VectorXd(double t, const Eigen::VectorXd& X, const Eigen::VectorXd& u,
                                const Eigen::VectorXd& mu)>
      b;
  std::function<Eigen::MatrixXd(double, const Eigen::VectorXd&, const Eigen::VectorXd&,
                                const Eigen::VectorXd&)>
      sigma;  // n x d, column i multiplies dW^i
  std::function<double(double t, const Eigen::VectorXd& X, double y, const Eigen::VectorXd& z,
                       const Eigen::VectorXd& u, const Eigen::VectorXd& mu)>
      f;
  std::function<double(const Eigen::VectorXd& X)> h;

  // first derivatives in X (and in y, z for the driver)
  std::function<Eigen::MatrixXd(double, const Eigen::VectorXd&, const Eigen::VectorXd&,
                                const Eigen::VectorXd&)>
      b_X;  // n x 3n
  std::function<std::vector<Eigen::MatrixXd>(double, const Eigen::VectorXd&,
                                             const Eigen::VectorXd&, const Eigen::VectorXd&)>
      sigma_X;  // d entries of n x 3n
  std::function<Eigen::VectorXd(double, const Eigen::VectorXd&, double, const Eigen::VectorXd&,
                                const Eigen::VectorXd&, const Eigen::VectorXd&)>
      f_X;  // 3n
  std::function<double(double, const Eigen::VectorXd&, double, const Eigen::VectorXd&,
                       const Eigen::VectorXd&, const Eigen::VectorXd&)>
      f_y;
  std::function<Eigen::VectorXd(double, const Eigen::VectorXd&, double, const Eigen::VectorXd&,
                                const Eigen::VectorXd&, const Eigen::VectorXd&)>
      f_z;  // d
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> h_X;  // 3n

  // second derivatives in X
  std::function<std::vector<Eigen::MatrixXd>(double, const Eigen::VectorXd&,
                                             const Eigen::VectorXd&, const Eigen::VectorXd&)>
      b_XX;  // n entries of 3n x 3n (one per drift component)
  std::function<std::vector<std::vector<Eigen::MatrixXd>>(double, const Eigen::VectorXd&,
                                                          const Eigen::VectorXd&,
                                                          const Eigen::VectorXd&)>
      sigma_XX;  // [noise i][component l] of 3n x 3n
  std::function<Eigen::MatrixXd(double, const Eigen::VectorXd&, double, const Eigen::VectorXd&,
                                const Eigen::VectorXd&, const Eigen::VectorXd&)>
      f_XX;  // 3n x 3n
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> h_XX;  // 3n x 3n

  ControlSet control_set;
  Regime regime = Regime::General;

  // structure flags solvers use to pick exact fast paths; a flag may only be
  // set when the property holds identically
  bool f_y_const = false;        // f_y does not depend on (t, X, y, z, u, mu)
  bool f_z_zero = false;         // f_z vanishes identically
  bool sigma_ctrl_indep = false; // sigma ignores (u, mu)
  bool sigma_state_indep = false;// sigma ignores X
  bool h_grad_const = false;     // h_X constant (h affine)
  bool coeffs_deterministic = false;  // regime DeterministicAffine shortcut

  double L1 = 10.0, L2 = 10.0;  // declared growth / derivative bounds
  double k1 = 1.0;  // declared bound on the state derivatives of b and sigma
                    // alone; gates the Picard window size

  // default reference and spike values used by experiments
  Eigen::VectorXd u_ref, u_spike;
};

// Derivative accessors with finite-difference fallback (central differences,
// step 1e-4 * (1 + |coordinate|)). All results are checked for shape.
Eigen::MatrixXd eval_b_X(const ModelSpec& m, double t, const Eigen::VectorXd& X,
                         const Eigen::VectorXd& u, const Eigen::VectorXd& mu);
std::vector<Eigen::MatrixXd> eval_sigma_X(const ModelSpec& m, double t, const Eigen::VectorXd& X,
                                          const Eigen::VectorXd& u, const Eigen::VectorXd& mu);
Eigen::VectorXd eval_f_X(const ModelSpec& m, double t, const Eigen::VectorXd& X, double y,
                         const Eigen::VectorXd& z, const Eigen::VectorXd& u,
                         const Eigen::VectorXd& mu);
double eval_f_y(const ModelSpec& m, double t, const Eigen::VectorXd& X, double y,
                const Eigen::VectorXd& z, const Eigen::VectorXd& u, const Eigen::VectorXd& mu);
Eigen::VectorXd eval_f_z(const ModelSpec& m, double t, const Eigen::VectorXd& X, double y,
                         const Eigen::VectorXd& z, const Eigen::VectorXd& u,
                         const Eigen::VectorXd& mu);
Eigen::VectorXd eval_h_X(const ModelSpec& m, const Eigen::VectorXd& X);
std::vector<Eigen::MatrixXd> eval_b_XX(const ModelSpec& m, double t, const Eigen::VectorXd& X,
                                       const Eigen::VectorXd& u, const Eigen::VectorXd& mu);
std::vector<std::vector<Eigen::MatrixXd>> eval_sigma_XX(const ModelSpec& m, double t,
                                                        const Eigen::VectorXd& X,
                                                        const Eigen::VectorXd& u,
                                                        const Eigen::VectorXd& mu);
Eigen::MatrixXd eval_f_XX(const ModelSpec& m, double t, const Eigen::VectorXd& X, double y,
                          const Eigen::VectorXd& z, const Eigen::VectorXd& u,
                          const Eigen::VectorXd& mu);
Eigen::MatrixXd eval_h_XX(const ModelSpec& m, const Eigen::VectorXd& X);

struct CoeffValues {
  Eigen::VectorXd b;
  Eigen::MatrixXd sigma;
  double f = 0.0;
};

CoeffValues eval_coeffs(const ModelSpec& m, double t, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& x_delta, const Eigen::VectorXd& x_tilde, double y,
                        const Eigen::VectorXd& z, const Eigen::VectorXd& u,
                        const Eigen::VectorXd& mu);

// Control path on grid indices -m_delay .. n_steps-1 (the value at index k
// acts on [t_k, t_{k+1})). Negative indices hold the initial control.
struct ControlProcess {
  std::string tag;
  int first_index = 0;
  std::vector<Eigen::VectorXd> values;

  const Eigen::VectorXd& at(int k) const { return values[k - first_index]; }
  Eigen::VectorXd& at(int k) { return values[k - first_index]; }
  int last_index() const { return first_index + static_cast<int>(values.size()) - 1; }
};

// constant value on [0, T), gamma_init before 0
ControlProcess make_control(const ModelSpec& m, const TimeGrid& grid, const Eigen::VectorXd& value,
                            const std::string& tag);
// arbitrary deterministic profile: value_at(t_k) on [0, T), gamma_init before
ControlProcess make_control_profile(const ModelSpec& m, const TimeGrid& grid,
                                    const std::function<Eigen::VectorXd(int)>& value_at,
                                    const std::string& tag);

// u_star outside [t0, t0+eps), u_alt on it. eps must be a positive grid
// multiple strictly below delta; the window must fit inside [0, T).
ControlProcess spike_control(const TimeGrid& grid, const ControlProcess& u_star,
                             const ControlProcess& u_alt, double t0, double eps);

// negative indices equal gamma_init samples; every value inside control_set
bool control_admissible(const ModelSpec& m, const TimeGrid& grid, const ControlProcess& u,
                        double tol = 1e-9);

struct ValidationReport {
  double max_first_derivative = 0.0;   // over b, sigma, h, f blocks
  double max_growth_ratio = 0.0;       // (|b| + |sigma|)(t,0,u,mu) / (1 + |u| + |mu|)
  double f_origin_ratio = 0.0;         // |f(t,0,0,0,u,mu)| / (1 + |u| + |mu|)^2
  double max_fd_mismatch = 0.0;        // analytic vs finite-difference, relative
  double max_hessian_asymmetry = 0.0;
  bool passed = false;
  std::string detail;
};

// Samples random states/controls and checks declared bounds (L2 for
// derivatives, L1 for coefficient growth at the origin), the agreement of
// analytic derivatives with finite differences, and Hessian symmetry.
ValidationReport validate_assumptions(const ModelSpec& m, int n_samples, std::uint64_t seed);

}  // namespace sddelab
