#include "sddelab/model.hpp"

#include <cmath>
#include <random>

#include "sddelab/errors.hpp"

namespace sddelab {

namespace {

double fd_step(double v) { return 1e-4 * (1.0 + std::abs(v)); }

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

void require(bool ok, const char* msg) {
  if (!ok) throw DimensionMismatch(msg);
}

// ---- finite-difference routes (always available) --------------------------

Mat fd_b_X(const ModelSpec& m, double t, const Vec& X, const Vec& u, const Vec& mu) {
  Mat out(m.n, 3 * m.n);
  Vec Xp = X, Xm = X;
  for (int j = 0; j < 3 * m.n; ++j) {
    const double h = fd_step(X[j]);
    Xp[j] = X[j] + h;
    Xm[j] = X[j] - h;
    out.col(j) = (m.b(t, Xp, u, mu) - m.b(t, Xm, u, mu)) / (2.0 * h);
    Xp[j] = X[j];
    Xm[j] = X[j];
  }
  return out;
}

std::vector<Mat> fd_sigma_X(const ModelSpec& m, double t, const Vec& X, const Vec& u,
                            const Vec& mu) {
  std::vector<Mat> out(m.d, Mat(m.n, 3 * m.n));
  Vec Xp = X, Xm = X;
  for (int j = 0; j < 3 * m.n; ++j) {
    const double h = fd_step(X[j]);
    Xp[j] = X[j] + h;
    Xm[j] = X[j] - h;
    const Mat sp = m.sigma(t, Xp, u, mu);
    const Mat sm = m.sigma(t, Xm, u, mu);
    for (int i = 0; i < m.d; ++i) out[i].col(j) = (sp.col(i) - sm.col(i)) / (2.0 * h);
    Xp[j] = X[j];
    Xm[j] = X[j];
  }
  return out;
}

Vec fd_f_X(const ModelSpec& m, double t, const Vec& X, double y, const Vec& z, const Vec& u,
           const Vec& mu) {
  Vec out(3 * m.n);
  Vec Xp = X, Xm = X;
  for (int j = 0; j < 3 * m.n; ++j) {
    const double h = fd_step(X[j]);
    Xp[j] = X[j] + h;
    Xm[j] = X[j] - h;
    out[j] = (m.f(t, Xp, y, z, u, mu) - m.f(t, Xm, y, z, u, mu)) / (2.0 * h);
    Xp[j] = X[j];
    Xm[j] = X[j];
  }
  return out;
}

double fd_f_y(const ModelSpec& m, double t, const Vec& X, double y, const Vec& z, const Vec& u,
              const Vec& mu) {
  const double h = fd_step(y);
  return (m.f(t, X, y + h, z, u, mu) - m.f(t, X, y - h, z, u, mu)) / (2.0 * h);
}

Vec fd_f_z(const ModelSpec& m, double t, const Vec& X, double y, const Vec& z, const Vec& u,
           const Vec& mu) {
  Vec out(m.d);
  Vec zp = z, zm = z;
  for (int j = 0; j < m.d; ++j) {
    const double h = fd_step(z[j]);
    zp[j] = z[j] + h;
    zm[j] = z[j] - h;
    out[j] = (m.f(t, X, y, zp, u, mu) - m.f(t, X, y, zm, u, mu)) / (2.0 * h);
    zp[j] = z[j];
    zm[j] = z[j];
  }
  return out;
}

Vec fd_h_X(const ModelSpec& m, const Vec& X) {
  Vec out(3 * m.n);
  Vec Xp = X, Xm = X;
  for (int j = 0; j < 3 * m.n; ++j) {
    const double h = fd_step(X[j]);
    Xp[j] = X[j] + h;
    Xm[j] = X[j] - h;
    out[j] = (m.h(Xp) - m.h(Xm)) / (2.0 * h);
    Xp[j] = X[j];
    Xm[j] = X[j];
  }
  return out;
}

// symmetric second differences of a scalar function of X
Mat fd_hessian(const std::function<double(const Vec&)>& fn, const Vec& X) {
  const int dim = static_cast<int>(X.size());
  Mat out(dim, dim);
  const double f0 = fn(X);
  Vec Xa = X;
  for (int i = 0; i < dim; ++i) {
    const double hi = fd_step(X[i]);
    Xa[i] = X[i] + hi;
    const double fp = fn(Xa);
    Xa[i] = X[i] - hi;
    const double fm = fn(Xa);
    Xa[i] = X[i];
    out(i, i) = (fp - 2.0 * f0 + fm) / (hi * hi);
    for (int j = i + 1; j < dim; ++j) {
      const double hj = fd_step(X[j]);
      Xa[i] = X[i] + hi;
      Xa[j] = X[j] + hj;
      const double fpp = fn(Xa);
      Xa[j] = X[j] - hj;
      const double fpm = fn(Xa);
      Xa[i] = X[i] - hi;
      const double fmm = fn(Xa);
      Xa[j] = X[j] + hj;
      const double fmp = fn(Xa);
      Xa[i] = X[i];
      Xa[j] = X[j];
      const double v = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

std::vector<Mat> fd_b_XX(const ModelSpec& m, double t, const Vec& X, const Vec& u, const Vec& mu) {
  std::vector<Mat> out;
  out.reserve(m.n);
  for (int l = 0; l < m.n; ++l)
    out.push_back(fd_hessian(
        [&](const Vec& Xv) { return m.b(t, Xv, u, mu)[l]; }, X));
  return out;
}

std::vector<std::vector<Mat>> fd_sigma_XX(const ModelSpec& m, double t, const Vec& X, const Vec& u,
                                          const Vec& mu) {
  std::vector<std::vector<Mat>> out(m.d);
  for (int i = 0; i < m.d; ++i)
    for (int l = 0; l < m.n; ++l)
      out[i].push_back(fd_hessian(
          [&](const Vec& Xv) { return m.sigma(t, Xv, u, mu)(l, i); }, X));
  return out;
}

Mat fd_f_XX(const ModelSpec& m, double t, const Vec& X, double y, const Vec& z, const Vec& u,
            const Vec& mu) {
  return fd_hessian([&](const Vec& Xv) { return m.f(t, Xv, y, z, u, mu); }, X);
}

Mat fd_h_XX(const ModelSpec& m, const Vec& X) {
  return fd_hessian([&](const Vec& Xv) { return m.h(Xv); }, X);
}

}  // namespace

// ---- public accessors: analytic when declared, differences otherwise ------

Eigen::MatrixXd eval_b_X(const ModelSpec& m, double t, const Vec& X, const Vec& u, const Vec& mu) {
  if (!m.b_X) return fd_b_X(m, t, X, u, mu);
  Mat out = m.b_X(t, X, u, mu);
  require(out.rows() == m.n && out.cols() == 3 * m.n, "b_X must be n x 3n");
  return out;
}

std::vector<Eigen::MatrixXd> eval_sigma_X(const ModelSpec& m, double t, const Vec& X, const Vec& u,
                                          const Vec& mu) {
  if (!m.sigma_X) return fd_sigma_X(m, t, X, u, mu);
  auto out = m.sigma_X(t, X, u, mu);
  require(static_cast<int>(out.size()) == m.d, "sigma_X must have d blocks");
  for (const Mat& blk : out)
    require(blk.rows() == m.n && blk.cols() == 3 * m.n, "sigma_X block must be n x 3n");
  return out;
}

Eigen::VectorXd eval_f_X(const ModelSpec& m, double t, const Vec& X, double y, const Vec& z,
                         const Vec& u, const Vec& mu) {
  if (!m.f_X) return fd_f_X(m, t, X, y, z, u, mu);
  Vec out = m.f_X(t, X, y, z, u, mu);
  require(out.size() == 3 * m.n, "f_X must have size 3n");
  return out;
}

double eval_f_y(const ModelSpec& m, double t, const Vec& X, double y, const Vec& z, const Vec& u,
                const Vec& mu) {
  if (!m.f_y) return fd_f_y(m, t, X, y, z, u, mu);
  return m.f_y(t, X, y, z, u, mu);
}

Eigen::VectorXd eval_f_z(const ModelSpec& m, double t, const Vec& X, double y, const Vec& z,
                         const Vec& u, const Vec& mu) {
  if (m.f_z_zero && !m.f_z) return Vec::Zero(m.d);
  if (!m.f_z) return fd_f_z(m, t, X, y, z, u, mu);
  Vec out = m.f_z(t, X, y, z, u, mu);
  require(out.size() == m.d, "f_z must have size d");
  return out;
}

Eigen::VectorXd eval_h_X(const ModelSpec& m, const Vec& X) {
  if (!m.h_X) return fd_h_X(m, X);
  Vec out = m.h_X(X);
  require(out.size() == 3 * m.n, "h_X must have size 3n");
  return out;
}

std::vector<Eigen::MatrixXd> eval_b_XX(const ModelSpec& m, double t, const Vec& X, const Vec& u,
                                       const Vec& mu) {
  if (!m.b_XX) return fd_b_XX(m, t, X, u, mu);
  auto out = m.b_XX(t, X, u, mu);
  require(static_cast<int>(out.size()) == m.n, "b_XX must have n blocks");
  for (const Mat& blk : out)
    require(blk.rows() == 3 * m.n && blk.cols() == 3 * m.n, "b_XX block must be 3n x 3n");
  return out;
}

std::vector<std::vector<Eigen::MatrixXd>> eval_sigma_XX(const ModelSpec& m, double t, const Vec& X,
                                                        const Vec& u, const Vec& mu) {
  if (!m.sigma_XX) return fd_sigma_XX(m, t, X, u, mu);
  auto out = m.sigma_XX(t, X, u, mu);
  require(static_cast<int>(out.size()) == m.d, "sigma_XX must have d outer blocks");
  for (const auto& per_noise : out) {
    require(static_cast<int>(per_noise.size()) == m.n, "sigma_XX inner blocks must count n");
    for (const Mat& blk : per_noise)
      require(blk.rows() == 3 * m.n && blk.cols() == 3 * m.n, "sigma_XX block must be 3n x 3n");
  }
  return out;
}

Eigen::MatrixXd eval_f_XX(const ModelSpec& m, double t, const Vec& X, double y, const Vec& z,
                          const Vec& u, const Vec& mu) {
  if (!m.f_XX) return fd_f_XX(m, t, X, y, z, u, mu);
  Mat out = m.f_XX(t, X, y, z, u, mu);
  require(out.rows() == 3 * m.n && out.cols() == 3 * m.n, "f_XX must be 3n x 3n");
  return out;
}

Eigen::MatrixXd eval_h_XX(const ModelSpec& m, const Vec& X) {
  if (!m.h_XX) return fd_h_XX(m, X);
  Mat out = m.h_XX(X);
  require(out.rows() == 3 * m.n && out.cols() == 3 * m.n, "h_XX must be 3n x 3n");
  return out;
}

CoeffValues eval_coeffs(const ModelSpec& m, double t, const Vec& x, const Vec& x_delta,
                        const Vec& x_tilde, double y, const Vec& z, const Vec& u, const Vec& mu) {
  require(x.size() == m.n && x_delta.size() == m.n && x_tilde.size() == m.n,
          "eval_coeffs: state blocks must have size n");
  require(z.size() == m.d, "eval_coeffs: z must have size d");
  require(u.size() == m.k_ctrl && mu.size() == m.k_ctrl,
          "eval_coeffs: controls must have size k");
  Vec X(3 * m.n);
  X << x, x_delta, x_tilde;
  CoeffValues out;
  out.b = m.b(t, X, u, mu);
  require(out.b.size() == m.n, "b must return size n");
  out.sigma = m.sigma(t, X, u, mu);
  require(out.sigma.rows() == m.n && out.sigma.cols() == m.d, "sigma must return n x d");
  out.f = m.f(t, X, y, z, u, mu);
  return out;
}

// ---- control sets and processes -------------------------------------------

bool ControlSet::contains(const Vec& u, double tol) const {
  if (is_box) {
    if (u.size() != lo.size()) return false;
    return (u.array() >= lo.array() - tol).all() && (u.array() <= hi.array() + tol).all();
  }
  for (const Vec& p : points)
    if (p.size() == u.size() && (p - u).cwiseAbs().maxCoeff() <= tol) return true;
  return false;
}

std::vector<Eigen::VectorXd> ControlSet::candidates(int points_per_dim) const {
  if (!is_box) return points;
  if (points_per_dim < 2) throw ConfigInvalid("ControlSet::candidates needs >= 2 points per dim");
  const int k = static_cast<int>(lo.size());
  std::vector<Vec> out;
  std::vector<int> idx(k, 0);
  for (;;) {
    Vec v(k);
    for (int j = 0; j < k; ++j)
      v[j] = lo[j] + (hi[j] - lo[j]) * idx[j] / (points_per_dim - 1);
    out.push_back(v);
    int j = 0;
    while (j < k && ++idx[j] == points_per_dim) idx[j++] = 0;
    if (j == k) break;
  }
  return out;
}

ControlProcess make_control_profile(const ModelSpec& m, const TimeGrid& grid,
                                    const std::function<Eigen::VectorXd(int)>& value_at,
                                    const std::string& tag) {
  ControlProcess u;
  u.tag = tag;
  u.first_index = -grid.m_delay;
  u.values.reserve(grid.m_delay + grid.n_steps);
  for (int k = -grid.m_delay; k < grid.n_steps; ++k) {
    Vec v = k < 0 ? m.gamma_init(grid.time(k)) : value_at(k);
    require(v.size() == m.k_ctrl, "control value must have size k");
    if (!m.control_set.contains(v, 1e-9))
      throw ConfigInvalid("control value outside the admissible set (tag " + tag + ")");
    u.values.push_back(std::move(v));
  }
  return u;
}

ControlProcess make_control(const ModelSpec& m, const TimeGrid& grid, const Vec& value,
                            const std::string& tag) {
  return make_control_profile(m, grid, [&](int) { return value; }, tag);
}

ControlProcess spike_control(const TimeGrid& grid, const ControlProcess& u_star,
                             const ControlProcess& u_alt, double t0, double eps) {
  if (u_star.first_index != u_alt.first_index || u_star.values.size() != u_alt.values.size())
    throw DimensionMismatch("spike_control: control processes must share the grid range");
  const int k0 = static_cast<int>(std::llround(t0 / grid.dt));
  if (std::abs(t0 - k0 * grid.dt) > 1e-9 * std::max(1.0, std::abs(t0)) || k0 < 0 ||
      k0 >= grid.n_steps)
    throw EpsNotAligned("spike_control: t0 must be a grid point in [0, T)");
  const int l = static_cast<int>(std::llround(eps / grid.dt));
  if (l < 1 || std::abs(eps - l * grid.dt) > 1e-9 * std::max(grid.dt, eps))
    throw EpsNotAligned("spike_control: eps must be a positive multiple of dt");
  if (!(eps < grid.delta - 1e-12))
    throw EpsNotLessThanDelta("spike_control: eps must be strictly below delta");
  if (k0 + l > grid.n_steps)
    throw EpsNotAligned("spike_control: window [t0, t0+eps) must fit inside [0, T)");
  ControlProcess out = u_star;
  out.tag = u_star.tag + "+spike(" + u_alt.tag + ")";
  for (int k = k0; k < k0 + l; ++k) out.at(k) = u_alt.at(k);
  return out;
}

bool control_admissible(const ModelSpec& m, const TimeGrid& grid, const ControlProcess& u,
                        double tol) {
  if (u.first_index != -grid.m_delay ||
      static_cast<int>(u.values.size()) != grid.m_delay + grid.n_steps)
    return false;
  for (int k = u.first_index; k <= u.last_index(); ++k) {
    if (!m.control_set.contains(u.at(k), tol)) return false;
    if (k < 0 && (u.at(k) - m.gamma_init(grid.time(k))).cwiseAbs().maxCoeff() > tol) return false;
  }
  return true;
}

// ---- assumption validation -------------------------------------------------

ValidationReport validate_assumptions(const ModelSpec& m, int n_samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const auto sample_control = [&]() -> Vec {
    if (!m.control_set.is_box) {
      const auto& pts = m.control_set.points;
      return pts[static_cast<std::size_t>(unif(rng) * pts.size()) % pts.size()];
    }
    Vec v(m.k_ctrl);
    for (int j = 0; j < m.k_ctrl; ++j) {
      const double lo = std::max(m.control_set.lo[j], -3.0);
      const double hi = std::min(m.control_set.hi[j], 3.0);
      v[j] = lo + (hi - lo) * unif(rng);
    }
    return v;
  };

  ValidationReport rep;
  const auto track_asym = [&](const Mat& M) {
    rep.max_hessian_asymmetry =
        std::max(rep.max_hessian_asymmetry, (M - M.transpose()).cwiseAbs().maxCoeff());
  };
  const auto track_mismatch = [&](double analytic, double fd) {
    rep.max_fd_mismatch =
        std::max(rep.max_fd_mismatch, std::abs(analytic - fd) / (1.0 + std::abs(analytic)));
  };

  try {
    for (int s = 0; s < n_samples; ++s) {
      const double t = m.T * unif(rng);
      Vec X(3 * m.n);
      for (int j = 0; j < 3 * m.n; ++j) X[j] = 2.0 * gauss(rng);
      const double y = gauss(rng);
      Vec z(m.d);
      for (int j = 0; j < m.d; ++j) z[j] = gauss(rng);
      const Vec u = sample_control();
      const Vec mu = sample_control();

      // first-derivative magnitudes against the declared bound
      const Mat bX = eval_b_X(m, t, X, u, mu);
      rep.max_first_derivative = std::max(rep.max_first_derivative, bX.cwiseAbs().maxCoeff());
      for (const Mat& sX : eval_sigma_X(m, t, X, u, mu))
        rep.max_first_derivative = std::max(rep.max_first_derivative, sX.cwiseAbs().maxCoeff());
      const Vec fX = eval_f_X(m, t, X, y, z, u, mu);
      rep.max_first_derivative = std::max(rep.max_first_derivative, fX.cwiseAbs().maxCoeff());
      rep.max_first_derivative =
          std::max(rep.max_first_derivative, std::abs(eval_f_y(m, t, X, y, z, u, mu)));
      rep.max_first_derivative =
          std::max(rep.max_first_derivative, eval_f_z(m, t, X, y, z, u, mu).cwiseAbs().maxCoeff());
      rep.max_first_derivative =
          std::max(rep.max_first_derivative, eval_h_X(m, X).cwiseAbs().maxCoeff());

      // growth of b, sigma at the zero state
      const Vec X0 = Vec::Zero(3 * m.n);
      const double denom = 1.0 + u.norm() + mu.norm();
      const double g =
          (m.b(t, X0, u, mu).norm() + m.sigma(t, X0, u, mu).norm()) / denom;
      rep.max_growth_ratio = std::max(rep.max_growth_ratio, g);
      rep.f_origin_ratio = std::max(
          rep.f_origin_ratio, std::abs(m.f(t, X0, 0.0, Vec::Zero(m.d), u, mu)) / (denom * denom));

      // analytic derivatives must agree with central differences
      if (m.b_X) {
        const Mat fd = fd_b_X(m, t, X, u, mu);
        for (int r = 0; r < m.n; ++r)
          for (int c = 0; c < 3 * m.n; ++c) track_mismatch(bX(r, c), fd(r, c));
      }
      if (m.sigma_X) {
        const auto an = eval_sigma_X(m, t, X, u, mu);
        const auto fd = fd_sigma_X(m, t, X, u, mu);
        for (int i = 0; i < m.d; ++i)
          for (int r = 0; r < m.n; ++r)
            for (int c = 0; c < 3 * m.n; ++c) track_mismatch(an[i](r, c), fd[i](r, c));
      }
      if (m.f_X) {
        const Vec fd = fd_f_X(m, t, X, y, z, u, mu);
        for (int j = 0; j < 3 * m.n; ++j) track_mismatch(fX[j], fd[j]);
      }
      if (m.f_y) track_mismatch(m.f_y(t, X, y, z, u, mu), fd_f_y(m, t, X, y, z, u, mu));
      if (m.f_z) {
        const Vec an = m.f_z(t, X, y, z, u, mu);
        const Vec fd = fd_f_z(m, t, X, y, z, u, mu);
        for (int j = 0; j < m.d; ++j) track_mismatch(an[j], fd[j]);
      }
      if (m.h_X) {
        const Vec an = m.h_X(X);
        const Vec fd = fd_h_X(m, X);
        for (int j = 0; j < 3 * m.n; ++j) track_mismatch(an[j], fd[j]);
      }
      if (m.h_XX) {
        const Mat an = m.h_XX(X);
        const Mat fd = fd_h_XX(m, X);
        for (int r = 0; r < 3 * m.n; ++r)
          for (int c = 0; c < 3 * m.n; ++c) track_mismatch(an(r, c), fd(r, c));
      }
      if (m.f_XX) {
        const Mat an = m.f_XX(t, X, y, z, u, mu);
        const Mat fd = fd_f_XX(m, t, X, y, z, u, mu);
        for (int r = 0; r < 3 * m.n; ++r)
          for (int c = 0; c < 3 * m.n; ++c) track_mismatch(an(r, c), fd(r, c));
      }

      // symmetry of every second-derivative block
      track_asym(eval_h_XX(m, X));
      track_asym(eval_f_XX(m, t, X, y, z, u, mu));
      for (const Mat& blk : eval_b_XX(m, t, X, u, mu)) track_asym(blk);
      for (const auto& per_noise : eval_sigma_XX(m, t, X, u, mu))
        for (const Mat& blk : per_noise) track_asym(blk);
    }
  } catch (const DimensionMismatch&) {
    throw;
  } catch (const std::exception& e) {
    throw EvaluatorFailure(std::string("coefficient evaluator raised: ") + e.what());
  }

  const bool der_ok = rep.max_first_derivative <= m.L2 * (1.0 + 1e-6) + 1e-9;
  const bool growth_ok = rep.max_growth_ratio <= m.L1 * (1.0 + 1e-6) + 1e-9;
  const bool fd_ok = rep.max_fd_mismatch <= 1e-5;
  const bool sym_ok = rep.max_hessian_asymmetry <= 1e-12;
  rep.passed = der_ok && growth_ok && fd_ok && sym_ok;
  rep.detail = std::string("derivatives ") + (der_ok ? "ok" : "exceed L2") + ", growth " +
               (growth_ok ? "ok" : "exceeds L1") + ", fd " + (fd_ok ? "ok" : "mismatch") +
               ", hessian symmetry " + (sym_ok ? "ok" : "violated");
  return rep;
}

}  // namespace sddelab
