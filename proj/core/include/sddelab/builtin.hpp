#pragma once
#include <string>
#include <vector>

#include "sddelab/model.hpp"

namespace sddelab {

// Coefficients of the affine/quadratic model family. Drift and diffusion are
// affine in (X, u, mu) with constant matrices; the driver and terminal allow
// quadratic forms in X and u so LQ-type costs fit in the same container.
//   b     = A0 x + A1 x_delta + A2 x_tilde + B0 u + B1 mu + b_const
//   sig^i = S0[i] x + S1[i] xd + S2[i] xt + T0[i] u + T1[i] mu + s_const[i]
//   f     = c0 + cx.x + cxd.xd + cxt.xt + cy y + cz.z + cu.u + cmu.mu
//           + X'FQ X + u'RU u
//   h     = h0 + hx.x + hxd.xd + hxt.xt + X'HQ X
struct AffineCoeffs {
  Eigen::MatrixXd A0, A1, A2;               // n x n
  Eigen::MatrixXd B0, B1;                   // n x k
  Eigen::VectorXd b_const;                  // n
  std::vector<Eigen::MatrixXd> S0, S1, S2;  // d entries, n x n
  std::vector<Eigen::MatrixXd> T0, T1;      // d entries, n x k
  std::vector<Eigen::VectorXd> s_const;     // d entries, n
  double c0 = 0.0, cy = 0.0;
  Eigen::VectorXd cx, cxd, cxt;  // n each
  Eigen::VectorXd cz;            // d
  Eigen::VectorXd cu, cmu;       // k each
  Eigen::MatrixXd FQ;            // 3n x 3n, symmetric
  Eigen::MatrixXd RU;            // k x k, symmetric
  double h0 = 0.0;
  Eigen::VectorXd hx, hxd, hxt;  // n each
  Eigen::MatrixXd HQ;            // 3n x 3n, symmetric
};

// all blocks zero at the given dimensions
AffineCoeffs zero_affine(int n, int d, int k);

struct AffineModelDef {
  std::string name;
  int n = 1, d = 1, k = 1;
  double T = 1.0, delta = 0.25, kappa = 0.0;
  AffineCoeffs cf;
  Eigen::VectorXd xi0;     // constant initial state segment
  Eigen::VectorXd gamma0;  // constant initial control segment
  Eigen::VectorXd u_ref, u_spike;
  ControlSet control_set;
};

ModelSpec make_affine_model(const AffineModelDef& def);

// named instances used by experiments and acceptance checks
ModelSpec make_builtin_model(const std::string& name);
std::vector<std::string> builtin_model_names();

}  // namespace sddelab
