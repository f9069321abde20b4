#include "sepmi/demand.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "sepmi/errors.hpp"
#include "sepmi/rng.hpp"
#include "sepmi/stats.hpp"

namespace sepmi {

int DemandData::dim_x() const {
  for (const auto& m : markets) {
    if (!m.obs.empty()) return static_cast<int>(m.obs.front().x.size());
  }
  return 0;
}

int DemandData::dim_z_file() const {
  for (const auto& m : markets) {
    if (!m.obs.empty()) return static_cast<int>(m.obs.front().z.size());
  }
  return 0;
}

int DemandData::total_obs() const {
  int n = 0;
  for (const auto& m : markets) n += static_cast<int>(m.obs.size());
  return n;
}

Draws Draws::make(int R, const Eigen::VectorXd& sigma_beta, double sigma_alpha,
                  std::uint64_t seed) {
  if (R < 1) throw ConfigInvalid("Draws: R must be >= 1");
  if (sigma_alpha < 0.0 || (sigma_beta.size() > 0 && sigma_beta.minCoeff() < 0.0)) {
    throw ConfigInvalid("Draws: standard deviations must be nonnegative");
  }
  Draws d;
  d.R = R;
  d.seed = seed;
  d.beta_dev.resize(R, sigma_beta.size());
  d.alpha_dev.resize(R);
  auto rng = make_rng(seed, 0x64726177);  // independent stream for the draws
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int r = 0; r < R; ++r) {
    for (Eigen::Index c = 0; c < sigma_beta.size(); ++c) {
      d.beta_dev(r, c) = sigma_beta(c) * normal(rng);
    }
    d.alpha_dev(r) = sigma_alpha * normal(rng);
  }
  return d;
}

Eigen::MatrixXd het_shifts(const Draws& draws, const Eigen::MatrixXd& X,
                           const Eigen::VectorXd& price) {
  if (X.rows() != price.size()) {
    throw ShapeMismatch("het_shifts: X rows != price length");
  }
  if (draws.beta_dev.cols() != X.cols()) {
    throw ShapeMismatch("het_shifts: draw dimension != characteristic count");
  }
  // shifts(j, r) = x_j' beta_dev_r - alpha_dev_r * p_j
  return X * draws.beta_dev.transpose() -
         price * draws.alpha_dev.transpose();
}

Eigen::VectorXd simulate_shares(const Eigen::VectorXd& zeta,
                                const Eigen::MatrixXd& shifts, int R) {
  const Eigen::Index J = zeta.size();
  if (R < 1) throw ConfigInvalid("simulate_shares: R must be >= 1");
  if (shifts.size() != 0 && (shifts.rows() != J || shifts.cols() != R)) {
    throw ShapeMismatch("simulate_shares: shifts must be J x R");
  }
  if (!zeta.allFinite()) {
    throw NonFiniteUtility("simulate_shares: non-finite mean utility");
  }
  if (shifts.size() != 0 && !shifts.allFinite()) {
    throw NonFiniteUtility("simulate_shares: non-finite heterogeneity shift");
  }

  Eigen::VectorXd s = Eigen::VectorXd::Zero(J);
  Eigen::VectorXd u(J);
  for (int r = 0; r < R; ++r) {
    if (shifts.size() != 0) {
      u = zeta + shifts.col(r);
    } else {
      u = zeta;
    }
    // Outside good has utility 0; subtract the max over {0, u_j} before
    // exponentiating so utilities up to +-700 stay in range.
    double m = std::max(0.0, J > 0 ? u.maxCoeff() : 0.0);
    double denom = std::exp(-m);
    for (Eigen::Index j = 0; j < J; ++j) denom += std::exp(u(j) - m);
    for (Eigen::Index j = 0; j < J; ++j) s(j) += std::exp(u(j) - m) / denom;
  }
  return s / static_cast<double>(R);
}

Eigen::VectorXd invert_shares(const Eigen::VectorXd& observed,
                              const Eigen::MatrixXd& shifts, int R,
                              double tol, int max_iter) {
  const Eigen::Index J = observed.size();
  if (J == 0) throw EmptyData("invert_shares: no products");
  if (observed.minCoeff() <= 0.0 || observed.maxCoeff() >= 1.0 ||
      observed.sum() >= 1.0) {
    throw ConfigInvalid(
        "invert_shares: shares must be in (0,1) with an outside good");
  }
  const Eigen::VectorXd log_obs = observed.array().log();
  Eigen::VectorXd zeta = log_obs;  // zeta^0 = ln s_obs
  double prev_resid = std::numeric_limits<double>::infinity();
  int growth_streak = 0;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd s = simulate_shares(zeta, shifts, R);
    Eigen::VectorXd step = log_obs - s.array().log().matrix();
    double resid = step.cwiseAbs().maxCoeff();
    if (resid <= tol) return zeta;
    if (resid > prev_resid) {
      if (++growth_streak >= 50) {
        throw NoConvergence("invert_shares: residual diverging after " +
                            std::to_string(it) + " iterations, residual " +
                            std::to_string(resid));
      }
    } else {
      growth_streak = 0;
    }
    prev_resid = resid;
    zeta += step;
  }
  throw NoConvergence("invert_shares: max_iter " + std::to_string(max_iter) +
                      " reached, final residual " + std::to_string(prev_resid));
}

void invert_utilities(DemandData& data, const Draws& draws, double tol,
                      int max_iter) {
  for (auto& m : data.markets) {
    if (m.obs.empty()) continue;
    const Eigen::Index J = static_cast<Eigen::Index>(m.obs.size());
    Eigen::VectorXd shares(J), price(J);
    Eigen::MatrixXd X(J, data.dim_x());
    for (Eigen::Index j = 0; j < J; ++j) {
      shares(j) = m.obs[static_cast<std::size_t>(j)].share;
      price(j) = m.obs[static_cast<std::size_t>(j)].price;
      X.row(j) = m.obs[static_cast<std::size_t>(j)].x.transpose();
    }
    Eigen::MatrixXd shifts = het_shifts(draws, X, price);
    m.zeta = invert_shares(shares, shifts, draws.R, tol, max_iter);
  }
}

Eigen::MatrixXd instrument_matrix(const DemandData& data) {
  const int n = data.total_obs();
  const int dx = data.dim_x();
  const int dz = data.dim_z_file();
  Eigen::MatrixXd Z(n, dx + dz);
  int row = 0;
  for (const auto& m : data.markets) {
    for (const auto& o : m.obs) {
      Z.row(row).head(dx) = o.x.transpose();
      Z.row(row).tail(dz) = o.z.transpose();
      ++row;
    }
  }
  return Z;
}

namespace {

// Stacks (zeta, X, price) over all markets; requires inverted zetas.
void stack_panel(const DemandData& data, Eigen::VectorXd& zeta,
                 Eigen::MatrixXd& X, Eigen::VectorXd& price) {
  const int n = data.total_obs();
  const int dx = data.dim_x();
  zeta.resize(n);
  X.resize(n, dx);
  price.resize(n);
  int row = 0;
  for (const auto& m : data.markets) {
    if (m.zeta.size() != static_cast<Eigen::Index>(m.obs.size())) {
      throw ShapeMismatch("demand: market " + std::to_string(m.market) +
                          " has no inverted mean utilities");
    }
    for (std::size_t j = 0; j < m.obs.size(); ++j) {
      zeta(row) = m.zeta(static_cast<Eigen::Index>(j));
      X.row(row) = m.obs[j].x.transpose();
      price(row) = m.obs[j].price;
      ++row;
    }
  }
}

}  // namespace

Eigen::MatrixXd default_weight(const DemandData& data) {
  Eigen::MatrixXd Z = instrument_matrix(data);
  const double n = static_cast<double>(Z.rows());
  try {
    SpdMatrix ztz(Eigen::MatrixXd(Z.transpose() * Z / n));
    Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(Z.cols(), Z.cols());
    return ztz.solve(eye);
  } catch (const NotPositiveDefinite&) {
    throw ConfigInvalid("instruments are collinear: Z'Z is singular");
  }
}

double gmm_objective(const Eigen::VectorXd& delta, const DemandData& data,
                     const Eigen::MatrixXd& weight) {
  Eigen::VectorXd zeta, price;
  Eigen::MatrixXd X;
  stack_panel(data, zeta, X, price);
  const Eigen::Index dx = X.cols();
  if (delta.size() != dx + 1) {
    throw ShapeMismatch("gmm_objective: delta must stack (beta, alpha)");
  }
  Eigen::MatrixXd Z = instrument_matrix(data);
  if (weight.rows() != Z.cols() || weight.cols() != Z.cols()) {
    throw ShapeMismatch("gmm_objective: weight shape != instrument count");
  }
  Eigen::VectorXd xi = zeta - X * delta.head(dx) + price * delta(dx);
  Eigen::VectorXd v = Z.transpose() * xi;
  return v.dot(weight * v);
}

FirstStageEstimate estimate_demand(DemandData& data, const Draws& draws,
                                   const Eigen::MatrixXd& weight,
                                   const Eigen::VectorXd& init,
                                   const EstimateOptions& opt) {
  if (data.total_obs() == 0) throw EmptyData("estimate_demand: no observations");
  if (!init.allFinite()) throw ConfigInvalid("estimate_demand: init not finite");

  // First pass: invert mean utilities market by market.
  invert_utilities(data, draws, opt.contraction_tol, opt.contraction_max_iter);

  Eigen::MatrixXd W = weight.size() == 0 ? default_weight(data) : weight;
  auto objective = [&](const Eigen::VectorXd& d) {
    return gmm_objective(d, data, W);
  };
  auto gradient = [&](const Eigen::VectorXd& d) {
    Eigen::VectorXd g(d.size());
    for (Eigen::Index c = 0; c < d.size(); ++c) {
      const double h = opt.gradient_step * (1.0 + std::fabs(d(c)));
      Eigen::VectorXd hi = d, lo = d;
      hi(c) += h;
      lo(c) -= h;
      g(c) = (objective(hi) - objective(lo)) / (2.0 * h);
    }
    return g;
  };

  FirstStageEstimate est;
  Eigen::VectorXd x = init;
  double f = objective(x);
  Eigen::VectorXd g = gradient(x);
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(x.size(), x.size());

  int it = 0;
  for (; it < opt.max_iter; ++it) {
    if (g.cwiseAbs().maxCoeff() <= opt.tol * (1.0 + std::fabs(f))) {
      est.converged = true;
      break;
    }
    Eigen::VectorXd p = -H * g;
    if (p.dot(g) >= 0.0) {  // lost curvature: restart from steepest descent
      H.setIdentity();
      p = -g;
    }
    // Backtracking Armijo line search.
    const double slope = g.dot(p);
    double t = 1.0;
    double fnew = 0.0;
    bool ok = false;
    for (int ls = 0; ls < 60; ++ls) {
      fnew = objective(x + t * p);
      if (fnew <= f + 1e-4 * t * slope) {
        ok = true;
        break;
      }
      t *= 0.5;
    }
    if (!ok) {
      if (g.cwiseAbs().maxCoeff() <= std::sqrt(opt.tol) * (1.0 + std::fabs(f))) {
        est.converged = true;  // flat within numerical-gradient resolution
        break;
      }
      throw LineSearchFailure(
          "estimate_demand: Armijo backtracking failed at iteration " +
          std::to_string(it));
    }
    Eigen::VectorXd xnew = x + t * p;
    Eigen::VectorXd gnew = gradient(xnew);
    Eigen::VectorXd s = xnew - x;
    Eigen::VectorXd y = gnew - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      // BFGS inverse-Hessian update.
      Eigen::MatrixXd I = Eigen::MatrixXd::Identity(x.size(), x.size());
      Eigen::MatrixXd V = I - (s * y.transpose()) / sy;
      H = V * H * V.transpose() + (s * s.transpose()) / sy;
    }
    x = xnew;
    f = fnew;
    g = gnew;
  }
  if (!est.converged &&
      g.cwiseAbs().maxCoeff() <= opt.tol * (1.0 + std::fabs(f))) {
    est.converged = true;  // converged exactly at the iteration cap
  }

  est.delta_hat = x;
  est.objective_value = f;
  est.iterations = it;
  est.grad_norm = g.cwiseAbs().maxCoeff();

  if (opt.with_influence) {
    Eigen::VectorXd zeta, price;
    Eigen::MatrixXd X;
    stack_panel(data, zeta, X, price);
    InfluenceResult inf =
        gmm_influence(X, price, zeta, instrument_matrix(data), x);
    est.influence = std::move(inf.influence);
    est.G = std::move(inf.G);
  }
  return est;
}

}  // namespace sepmi
