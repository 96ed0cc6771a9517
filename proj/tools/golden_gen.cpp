// Regenerates the oracle reference tables under tests/golden. The committed
// files are frozen; rerun this only when kOracleVersion is bumped, and review
// the diff. Usage: golden-gen <output-dir>
#include <cstdio>
#include <filesystem>

#include "sddelab/grid.hpp"
#include "sddelab/oracles.hpp"
#include "sddelab/persist.hpp"

using namespace sddelab;

namespace {

Eigen::MatrixXd m1(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }
Eigen::VectorXd v1(double v) { return Eigen::VectorXd::Constant(1, v); }

LQParams lq_simple() {
  LQParams p;
  p.A = m1(0.0);
  p.B = m1(1.0);
  p.C = m1(0.0);
  p.D = m1(0.0);
  p.Q = m1(0.0);
  p.R = m1(1.0);
  p.G = m1(1.0);
  p.x0 = v1(1.0);
  p.T = 1.0;
  return p;
}

LQParams lq_classic() {
  LQParams p = lq_simple();
  p.A = m1(0.2);
  p.C = m1(0.3);
  p.D = m1(0.4);
  p.Q = m1(0.5);
  return p;
}

DpModel dp_reference() {
  DpModel m;
  m.n_steps = 4;
  m.branching = 2;
  m.m_delay = 1;
  m.dt = 0.25;
  m.x0 = 0.5;
  m.u_init = 0.1;
  m.xi = {0.5};
  m.controls = {-0.5, 0.0, 0.5};
  m.drift = [](int, double x, double, double u, double mu) { return 0.25 * x + 0.7 * u + 0.5 * mu; };
  m.vol = [](int, double, double, double, double) { return 0.4; };
  m.run_cost = [](int, double, double, double u, double) { return 0.5 * u * u; };
  m.terminal = [](double xT, double) { return 0.8 * xT; };
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: golden-gen <output-dir>\n");
    return 1;
  }
  const std::filesystem::path dir = argv[1];
  std::filesystem::create_directories(dir);

  {
    const double dt = 1.0 / 64.0;
    const LQSolution sol = lq_closed_form(lq_simple(), dt);
    CsvTable t;
    t.header = {"t", "P", "K", "dt_oracle", "oracle_version"};
    for (int k = 0; k <= 16; ++k) {
      const double time = k / 16.0;
      t.rows.push_back({time, sol.P_at(time)(0, 0), sol.K_at(time)(0, 0), sol.dt_oracle,
                        kOracleVersion});
    }
    write_csv(dir / "lq_riccati.csv", t);
  }
  {
    const double dt = 0.25;
    const StepsPath path = method_of_steps_ode(0.0, 1.0, 0.5, 1.0, [](double) { return 1.0; }, dt);
    CsvTable t;
    t.header = {"t", "x", "dt_oracle", "oracle_version"};
    for (int k = 0; k <= 8; ++k) {
      const double time = k / 8.0;
      t.rows.push_back({time, path.at(time), path.dt_fine, kOracleVersion});
    }
    write_csv(dir / "steps_path.csv", t);
  }
  {
    const double dt = 1.0 / 16.0;
    const StepsPath phi = delayed_fundamental(0.25, 0.4, 0.25, 1.0, dt);
    CsvTable t;
    t.header = {"t", "phi", "dt_oracle", "oracle_version"};
    for (int k = 0; k <= 16; ++k) {
      const double time = k / 16.0;
      t.rows.push_back({time, phi.at(time), phi.dt_fine, kOracleVersion});
    }
    write_csv(dir / "fundamental.csv", t);
  }
  {
    const TimeGrid grid = build_grid(1.0, 0.25, 4);
    DelayedLQParams p;
    p.a0 = 0.25;
    p.a1 = 0.0;
    p.b0 = 0.7;
    p.b1 = 0.5;
    p.r = 0.5;
    p.g = 0.8;
    const DelayedLQControl ctl = delayed_lq_control(p, grid);
    CsvTable t;
    t.header = {"t", "u", "psi", "dt_oracle", "oracle_version"};
    for (int k = 0; k < grid.n_steps; ++k)
      t.rows.push_back({grid.time(k), ctl.u[k], ctl.psi[k], grid.dt / 64.0, kOracleVersion});
    write_csv(dir / "delayed_lq.csv", t);
  }
  {
    CsvTable t;
    t.header = {"case", "value", "dt_oracle", "oracle_version"};
    const double dt = 1.0 / 64.0;
    t.rows.push_back({0.0, lq_closed_form(lq_simple(), dt).value, dt / 16.0, kOracleVersion});
    t.rows.push_back({1.0, lq_closed_form(lq_classic(), dt).value, dt / 16.0, kOracleVersion});
    const DpModel m = dp_reference();
    t.rows.push_back({2.0, dp_scenario_tree(m).value, m.dt, kOracleVersion});
    write_csv(dir / "oracle_values.csv", t);
  }
  std::printf("golden files written to %s\n", dir.string().c_str());
  return 0;
}
