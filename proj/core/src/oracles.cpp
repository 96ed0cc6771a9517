#include "sddelab/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sddelab/errors.hpp"

namespace sddelab {

namespace {

void check_psd(const Eigen::MatrixXd& M, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()));
  const double floor = -1e-10 * (1.0 + M.norm());
  if (es.eigenvalues().minCoeff() < floor)
    throw ConfigInvalid(std::string(what) + " must be positive semidefinite");
}

int aligned_index(double time, double h, int max_index, const char* what) {
  const long long idx = std::llround(time / h);
  if (std::abs(time - static_cast<double>(idx) * h) > 1e-9 * std::max(1.0, std::abs(time)))
    throw NonAlignedHorizon(std::string(what) + ": time not on the oracle grid");
  if (idx < 0 || idx > max_index)
    throw IndexUnderflow(std::string(what) + ": time outside the stored range");
  return static_cast<int>(idx);
}

}  // namespace

// --------------------------------------------------------------------------
// LQ Riccati oracle
// --------------------------------------------------------------------------

int LQSolution::index_of(double time) const {
  return aligned_index(time, dt_oracle, static_cast<int>(t.size()) - 1, "LQSolution");
}

const Eigen::MatrixXd& LQSolution::P_at(double time) const { return P[index_of(time)]; }
const Eigen::MatrixXd& LQSolution::K_at(double time) const { return K[index_of(time)]; }

LQSolution lq_closed_form(const LQParams& prm, double dt) {
  const auto n = prm.A.rows();
  const auto m = prm.B.cols();
  if (prm.A.cols() != n || prm.B.rows() != n || prm.C.rows() != n || prm.C.cols() != n ||
      prm.D.rows() != n || prm.D.cols() != m || prm.Q.rows() != n || prm.Q.cols() != n ||
      prm.R.rows() != m || prm.R.cols() != m || prm.G.rows() != n || prm.G.cols() != n ||
      prm.x0.size() != n)
    throw DimensionMismatch("lq_closed_form: inconsistent matrix shapes");
  if (prm.T <= 0.0 || dt <= 0.0) throw ConfigInvalid("lq_closed_form: T and dt must be positive");
  Eigen::LDLT<Eigen::MatrixXd> rchk(0.5 * (prm.R + prm.R.transpose()));
  if (rchk.info() != Eigen::Success || !rchk.isPositive() ||
      rchk.vectorD().minCoeff() <= 1e-12 * (1.0 + prm.R.norm()))
    throw ConfigInvalid("lq_closed_form: R must be positive definite");
  check_psd(prm.Q, "lq_closed_form: Q");
  check_psd(prm.G, "lq_closed_form: G");
  const bool has_offset = prm.sigma_bar.size() > 0 && prm.sigma_bar.norm() > 0.0;
  if (has_offset && (prm.C.norm() > 0.0 || prm.D.norm() > 0.0))
    throw ConfigInvalid("lq_closed_form: constant diffusion offset requires C = D = 0");
  if (has_offset && prm.sigma_bar.size() != n)
    throw DimensionMismatch("lq_closed_form: sigma_bar size");

  LQSolution sol;
  sol.dt_oracle = dt / 16.0;
  const int nf = static_cast<int>(std::llround(prm.T / sol.dt_oracle));
  if (std::abs(nf * sol.dt_oracle - prm.T) > 1e-9 * std::max(1.0, prm.T))
    throw NonAlignedHorizon("lq_closed_form: T not a multiple of dt/16");
  const double h = sol.dt_oracle;

  // dP/dt = -(A'P + PA + C'PC + Q - (PB + C'PD)(R + D'PD)^{-1}(B'P + D'PC)),
  // plus the scalar bias dc/dt = -sigma_bar' P sigma_bar when the diffusion
  // has a constant offset. One RK4 sweep backward from T handles both.
  const auto deriv = [&](const Eigen::MatrixXd& P) -> Eigen::MatrixXd {
    const Eigen::MatrixXd L = P * prm.B + prm.C.transpose() * P * prm.D;
    const Eigen::MatrixXd Rt = prm.R + prm.D.transpose() * P * prm.D;
    const Eigen::MatrixXd M = L * Rt.ldlt().solve(L.transpose());
    Eigen::MatrixXd out = -(prm.A.transpose() * P + P * prm.A +
                            prm.C.transpose() * P * prm.C + prm.Q - M);
    return out;
  };
  const auto bias_deriv = [&](const Eigen::MatrixXd& P) -> double {
    if (!has_offset) return 0.0;
    return -(prm.sigma_bar.transpose() * P * prm.sigma_bar)(0, 0);
  };

  sol.t.resize(nf + 1);
  sol.P.resize(nf + 1);
  sol.K.resize(nf + 1);
  for (int k = 0; k <= nf; ++k) sol.t[k] = k * h;
  sol.P[nf] = 0.5 * (prm.G + prm.G.transpose());
  double c = 0.0;
  for (int k = nf; k > 0; --k) {
    const Eigen::MatrixXd& P = sol.P[k];
    const Eigen::MatrixXd k1 = deriv(P);
    const double c1 = bias_deriv(P);
    const Eigen::MatrixXd P2 = P - 0.5 * h * k1;
    const Eigen::MatrixXd k2 = deriv(P2);
    const double c2 = bias_deriv(P2);
    const Eigen::MatrixXd P3 = P - 0.5 * h * k2;
    const Eigen::MatrixXd k3 = deriv(P3);
    const double c3 = bias_deriv(P3);
    const Eigen::MatrixXd P4 = P - h * k3;
    const Eigen::MatrixXd k4 = deriv(P4);
    const double c4 = bias_deriv(P4);
    Eigen::MatrixXd Pn = P - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    Pn = 0.5 * (Pn + Pn.transpose());
    if (!Pn.allFinite() || Pn.norm() > 1e12) throw RiccatiBlowup("Riccati path diverged");
    sol.P[k - 1] = Pn;
    c -= (h / 6.0) * (c1 + 2.0 * c2 + 2.0 * c3 + c4);
  }
  for (int k = 0; k <= nf; ++k) {
    const Eigen::MatrixXd Rt = prm.R + prm.D.transpose() * sol.P[k] * prm.D;
    sol.K[k] = Rt.ldlt().solve(prm.B.transpose() * sol.P[k] +
                               prm.D.transpose() * sol.P[k] * prm.C);
  }
  sol.value = (prm.x0.transpose() * sol.P[0] * prm.x0)(0, 0) + c;
  return sol;
}

// --------------------------------------------------------------------------
// Delay ODE method of steps
// --------------------------------------------------------------------------

double StepsPath::at(double time) const {
  return x[aligned_index(time, dt_fine, static_cast<int>(x.size()) - 1, "StepsPath")];
}

namespace {

// RK4 with cubic-Hermite lookup of the delayed value; history(tau, left)
// supplies values for tau <= 0, with `left` selecting the left limit at 0 so
// a discontinuous history (fundamental solution) still yields one-sided
// derivatives consistent with each smoothness piece.
StepsPath integrate_delay_ode(double a0, double a1, double delta, double T, double x_start,
                              const std::function<double(double, bool)>& history, double dt) {
  if (delta <= 0.0 || T <= 0.0 || dt <= 0.0)
    throw InvalidDelay("delay ODE oracle: delta, T, dt must be positive");
  StepsPath out;
  out.dt_fine = dt / 64.0;
  const double h = out.dt_fine;
  const int lag = static_cast<int>(std::llround(delta / h));
  if (lag < 1 || std::abs(lag * h - delta) > 1e-9 * delta)
    throw NonAlignedHorizon("delay ODE oracle: delta not a multiple of dt/64");
  const int nf = static_cast<int>(std::llround(T / h));
  if (std::abs(nf * h - T) > 1e-9 * std::max(1.0, T))
    throw NonAlignedHorizon("delay ODE oracle: T not a multiple of dt/64");

  std::vector<double>& x = out.x;
  x.assign(nf + 1, 0.0);
  std::vector<double> dr(nf + 1, 0.0), dl(nf + 1, 0.0);
  out.t.resize(nf + 1);
  for (int k = 0; k <= nf; ++k) out.t[k] = k * h;
  x[0] = x_start;

  const auto delayed_node = [&](int k, bool left) -> double {
    const int j = k - lag;
    if (j < 0) return history(j * h, false);
    if (j == 0) return left ? history(0.0, true) : x[0];
    return x[j];
  };
  const auto delayed_mid = [&](int k) -> double {
    const int j = k - lag;
    if (j + 1 <= 0) return history((j + 0.5) * h, false);
    return 0.5 * (x[j] + x[j + 1]) + 0.125 * h * (dr[j] - dl[j + 1]);
  };

  for (int k = 0; k < nf; ++k) {
    const double d0 = delayed_node(k, false);
    const double k1 = a0 * x[k] + a1 * d0;
    dr[k] = k1;
    const double dm = delayed_mid(k);
    const double k2 = a0 * (x[k] + 0.5 * h * k1) + a1 * dm;
    const double k3 = a0 * (x[k] + 0.5 * h * k2) + a1 * dm;
    const double d1 = delayed_node(k + 1, true);
    const double k4 = a0 * (x[k] + h * k3) + a1 * d1;
    x[k + 1] = x[k] + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    dl[k + 1] = a0 * x[k + 1] + a1 * d1;
    if (!std::isfinite(x[k + 1])) throw NonFinite("delay ODE oracle: path diverged");
  }
  return out;
}

}  // namespace

StepsPath method_of_steps_ode(double a0, double a1, double delta, double T,
                              const std::function<double(double)>& xi, double dt) {
  return integrate_delay_ode(a0, a1, delta, T, xi(0.0),
                             [&](double tau, bool) { return xi(tau); }, dt);
}

StepsPath delayed_fundamental(double a0, double a1, double delta, double T, double dt) {
  // phi = 1 at 0 and 0 before; left limits at 0 resolve to the zero side.
  return integrate_delay_ode(a0, a1, delta, T, 1.0,
                             [](double, bool) { return 0.0; }, dt);
}

DelayedLQControl delayed_lq_control(const DelayedLQParams& prm, const TimeGrid& grid) {
  if (prm.r <= 0.0) throw ConfigInvalid("delayed_lq_control: r must be positive");
  const StepsPath phi = delayed_fundamental(prm.a0, prm.a1, grid.delta, grid.T, grid.dt);
  DelayedLQControl out;
  out.u.resize(grid.n_steps);
  out.psi.resize(grid.n_steps);
  for (int k = 0; k < grid.n_steps; ++k) {
    const double t = grid.time(k);
    double psi = prm.b0 * phi.at(grid.T - t);
    if (t + grid.delta <= grid.T + 1e-12) psi += prm.b1 * phi.at(grid.T - t - grid.delta);
    out.psi[k] = psi;
    out.u[k] = -prm.g / (2.0 * prm.r) * psi;
  }
  return out;
}

// --------------------------------------------------------------------------
// Scenario-tree dynamic programming
// --------------------------------------------------------------------------

namespace {

struct DpShocks {
  std::vector<double> eps;
  std::vector<double> prob;
};

DpShocks dp_shocks(int branching) {
  if (branching == 2) return {{1.0, -1.0}, {0.5, 0.5}};
  if (branching == 3) {
    const double s = std::sqrt(3.0);
    return {{-s, 0.0, s}, {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0}};
  }
  throw ConfigInvalid("dp_scenario_tree: branching must be 2 or 3");
}

struct DpWork {
  const DpModel& m;
  DpShocks sh;
  double sq_dt;
  std::vector<double> xs;  // x_{-m} .. x_k, so x_j sits at xs[j + m]
  std::vector<double> us;  // u_0 .. u_{k-1}
  std::vector<int> order;  // control enumeration order

  double xdel(int k) const { return xs[k]; }
  double mu(int k, double u) const {
    if (m.m_delay == 0) return u;
    return k >= m.m_delay ? us[k - m.m_delay] : m.u_init;
  }

  double value(int k) {
    if (k == m.n_steps) return m.terminal(xs.back(), xs[m.n_steps]);
    const double xk = xs.back();
    const double xd = xdel(k);
    double best = std::numeric_limits<double>::infinity();
    for (int oi : order) {
      const double u = m.controls[oi];
      const double muv = mu(k, u);
      double acc = m.run_cost(k, xk, xd, u, muv) * m.dt;
      const double bdt = m.drift(k, xk, xd, u, muv) * m.dt;
      const double vol = m.vol(k, xk, xd, u, muv) * sq_dt;
      for (std::size_t i = 0; i < sh.eps.size(); ++i) {
        xs.push_back(xk + bdt + vol * sh.eps[i]);
        us.push_back(u);
        acc += sh.prob[i] * value(k + 1);
        xs.pop_back();
        us.pop_back();
      }
      if (acc < best) best = acc;
    }
    return best;
  }

  void walk(int k, std::vector<int>& hist, DpSolution& sol) {
    if (k == m.n_steps) return;
    const double xk = xs.back();
    const double xd = xdel(k);
    double best = std::numeric_limits<double>::infinity();
    double best_u = m.controls[order.front()];
    for (int oi : order) {
      const double u = m.controls[oi];
      const double muv = mu(k, u);
      double acc = m.run_cost(k, xk, xd, u, muv) * m.dt;
      const double bdt = m.drift(k, xk, xd, u, muv) * m.dt;
      const double vol = m.vol(k, xk, xd, u, muv) * sq_dt;
      for (std::size_t i = 0; i < sh.eps.size(); ++i) {
        xs.push_back(xk + bdt + vol * sh.eps[i]);
        us.push_back(u);
        acc += sh.prob[i] * value(k + 1);
        xs.pop_back();
        us.pop_back();
      }
      if (acc < best) {
        best = acc;
        best_u = u;
      }
    }
    sol.policy[hist] = best_u;
    const double muv = mu(k, best_u);
    const double bdt = m.drift(k, xk, xd, best_u, muv) * m.dt;
    const double vol = m.vol(k, xk, xd, best_u, muv) * sq_dt;
    for (std::size_t i = 0; i < sh.eps.size(); ++i) {
      xs.push_back(xk + bdt + vol * sh.eps[i]);
      us.push_back(best_u);
      hist.push_back(static_cast<int>(i));
      walk(k + 1, hist, sol);
      hist.pop_back();
      xs.pop_back();
      us.pop_back();
    }
  }
};

DpWork dp_prepare(const DpModel& m, bool reverse) {
  if (m.n_steps < 1 || m.dt <= 0.0) throw ConfigInvalid("dp_scenario_tree: bad horizon");
  if (m.controls.empty()) throw ConfigInvalid("dp_scenario_tree: empty control set");
  if (static_cast<int>(m.xi.size()) != m.m_delay)
    throw DimensionMismatch("dp_scenario_tree: xi must hold m_delay pre-horizon states");
  if (!m.drift || !m.vol || !m.run_cost || !m.terminal)
    throw ConfigInvalid("dp_scenario_tree: model callbacks missing");
  DpShocks sh = dp_shocks(m.branching);
  const double leaves =
      std::pow(static_cast<double>(m.controls.size()) * m.branching, m.n_steps);
  if (leaves > 1e6) throw TreeTooLarge("dp_scenario_tree: control/shock tree exceeds 1e6 leaves");
  DpWork w{m, std::move(sh), std::sqrt(m.dt), {}, {}, {}};
  w.xs.reserve(m.m_delay + m.n_steps + 1);
  w.xs.insert(w.xs.end(), m.xi.begin(), m.xi.end());
  w.xs.push_back(m.x0);
  w.us.reserve(m.n_steps);
  for (int i = 0; i < static_cast<int>(m.controls.size()); ++i) w.order.push_back(i);
  if (reverse) std::reverse(w.order.begin(), w.order.end());
  return w;
}

}  // namespace

DpSolution dp_scenario_tree(const DpModel& model, bool reverse_enumeration) {
  DpWork w = dp_prepare(model, reverse_enumeration);
  DpSolution sol;
  sol.value = w.value(0);
  std::vector<int> hist;
  w.walk(0, hist, sol);
  return sol;
}

double dp_policy_cost(const DpModel& model, const std::map<std::vector<int>, double>& policy) {
  DpWork w = dp_prepare(model, false);
  std::vector<int> hist;
  const std::function<double(int)> go = [&](int k) -> double {
    if (k == model.n_steps) return model.terminal(w.xs.back(), w.xs[model.n_steps]);
    const auto it = policy.find(hist);
    if (it == policy.end()) throw ConfigInvalid("dp_policy_cost: policy missing a tree node");
    const double u = it->second;
    const double xk = w.xs.back();
    const double xd = w.xdel(k);
    const double muv = w.mu(k, u);
    double acc = model.run_cost(k, xk, xd, u, muv) * model.dt;
    const double bdt = model.drift(k, xk, xd, u, muv) * model.dt;
    const double vol = model.vol(k, xk, xd, u, muv) * w.sq_dt;
    for (std::size_t i = 0; i < w.sh.eps.size(); ++i) {
      w.xs.push_back(xk + bdt + vol * w.sh.eps[i]);
      w.us.push_back(u);
      hist.push_back(static_cast<int>(i));
      acc += w.sh.prob[i] * go(k + 1);
      hist.pop_back();
      w.us.pop_back();
      w.xs.pop_back();
    }
    return acc;
  };
  return go(0);
}

}  // namespace sddelab
