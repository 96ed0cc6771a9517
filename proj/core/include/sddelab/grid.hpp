#pragma once
#include <cmath>

namespace sddelab {

// Uniform grid t_k = k*dt, k = -m_delay..n_steps, with dt = delta/m_delay so the
// delay is an exact number of steps. pre_steps nodes carry the initial segment.
struct TimeGrid {
  double T = 0.0;
  double delta = 0.0;
  double dt = 0.0;
  int n_steps = 0;
  int m_delay = 0;
  int pre_steps = 0;

  double time(int k) const { return dt * k; }
  int node_count() const { return pre_steps + n_steps + 1; }
  // storage offset of grid index k (k = -pre_steps maps to 0)
  int offset(int k) const { return k + pre_steps; }
};

// throws InvalidDelay / NonAlignedHorizon
TimeGrid build_grid(double T, double delta, int m_delay);

}  // namespace sddelab
