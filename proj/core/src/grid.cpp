#include "sddelab/grid.hpp"

#include <string>

#include "sddelab/errors.hpp"

namespace sddelab {

TimeGrid build_grid(double T, double delta, int m_delay) {
  if (!(T > 0.0)) throw NonAlignedHorizon("horizon T must be positive");
  if (!(delta > 0.0) || !(delta < T) || m_delay < 1)
    throw InvalidDelay("need 0 < delta < T and m_delay >= 1 (delta=" +
                       std::to_string(delta) + ", m_delay=" + std::to_string(m_delay) + ")");
  const double dt = delta / m_delay;
  const double ratio = T / dt;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio))
    throw NonAlignedHorizon("T is not an integer multiple of dt = delta/m_delay within 1e-9");
  TimeGrid g;
  g.T = T;
  g.delta = delta;
  g.dt = dt;
  g.n_steps = static_cast<int>(rounded);
  g.m_delay = m_delay;
  g.pre_steps = m_delay;
  return g;
}

}  // namespace sddelab
