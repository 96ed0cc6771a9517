#pragma once
#include <array>

#include "sddelab/bsde.hpp"
#include "sddelab/grid.hpp"
#include "sddelab/model.hpp"
#include "sddelab/paths.hpp"

namespace sddelab {

// Exponential weight translating the backward cost into forward expectations.
// Built log-exactly on the grid:
//   log G(t_k) = sum f_y dt + sum f_z' dW - 1/2 sum |f_z|^2 dt,
// so positivity holds on every path and the two exponents stay separable.
struct GammaPath {
  PathMatrix log_drift;  // cumulative f_y dt, nodes 0 .. n_steps
  PathMatrix log_mart;   // cumulative f_z' dW - 1/2 |f_z|^2 dt
  PathMatrix value;      // exp of the sum

  double at(int p, int k) const { return value.at(p, k, 0); }
};

// fy: scalar per (path, step); fz: d components per (path, step); both on
// steps 0 .. n_steps-1 at least.
GammaPath doleans_gamma(const PathMatrix& fy, const PathMatrix& fz, const BrownianBundle& W,
                        const TimeGrid& grid);

// Builds the driver-derivative paths along a trajectory and delegates. The
// backward pair (y, z) enters the derivative arguments when supplied; models
// whose f_y, f_z ignore (y, z) can pass nullptr.
GammaPath doleans_gamma_from_model(const ModelSpec& m, const PathMatrix& x,
                                   const ControlProcess& u, const BsdeSolution* yz,
                                   const BrownianBundle& W, const TimeGrid& grid);

// Fixed 8-point Gauss-Legendre rule on [0, 1], used for the theta-averages
// of perturbed driver derivatives (smooth integrands, spectral accuracy).
struct GaussLegendre8 {
  std::array<double, 8> node;
  std::array<double, 8> weight;
};
const GaussLegendre8& gauss_legendre_8();

}  // namespace sddelab
