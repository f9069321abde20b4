#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "sepmi/two_stage.hpp"

namespace sepmi {

// One product-period row of the demand panel.
struct DemandObs {
  int market = 0;    // equals the period in the annual-market layout
  int period = 0;
  int firm = 0;
  int product = 0;
  Eigen::VectorXd x;  // characteristics, d_X = 4
  double price = 0.0;
  double mc = 0.0;
  double quantity = 0.0;
  double market_size = 0.0;
  Eigen::VectorXd z;  // instrument columns from the file (cost shifters)
  double share = 0.0; // quantity / market_size, set at ingestion
};

struct DemandMarket {
  int market = 0;
  int period = 0;
  std::vector<DemandObs> obs;
  Eigen::VectorXd zeta;  // inverted mean utilities; empty until inversion
};

struct DemandData {
  std::vector<DemandMarket> markets;
  int dim_x() const;
  int dim_z_file() const;  // instrument columns in the file
  int total_obs() const;
};

// Fixed heterogeneity draws: per-draw coefficient deviations, already scaled
// by the configured standard deviations (zero scales = plain logit).
struct Draws {
  int R = 1;
  Eigen::MatrixXd beta_dev;   // R x d_X
  Eigen::VectorXd alpha_dev;  // R
  std::uint64_t seed = 0;

  static Draws make(int R, const Eigen::VectorXd& sigma_beta,
                    double sigma_alpha, std::uint64_t seed);
};

/// Per-draw utility perturbations for one market: shifts(j, r) = x_j' b_r - a_r p_j.
Eigen::MatrixXd het_shifts(const Draws& draws, const Eigen::MatrixXd& X,
                           const Eigen::VectorXd& price);

// s_j = (1/R) sum_r exp(zeta_j + shifts_jr) / (1 + sum_k exp(zeta_k + shifts_kr)),
// log-sum-exp stabilized. Empty shifts means zero perturbations (R columns).
Eigen::VectorXd simulate_shares(const Eigen::VectorXd& zeta,
                                const Eigen::MatrixXd& shifts, int R);

// Fixed point of zeta <- zeta + ln s_obs - ln s(zeta) from zeta0 = ln s_obs.
Eigen::VectorXd invert_shares(const Eigen::VectorXd& observed,
                              const Eigen::MatrixXd& shifts, int R,
                              double tol = 1e-12, int max_iter = 10000);

// Runs the contraction in every market and stores the result in market.zeta.
void invert_utilities(DemandData& data, const Draws& draws,
                      double tol = 1e-12, int max_iter = 10000);

// Q(delta) = xi' Z W Z' xi with xi_j = zeta_j - x_j'beta + alpha p_j stacked
// over markets; requires every market's zeta to be inverted already.
// The instrument matrix stacks [x, file instruments] per observation.
double gmm_objective(const Eigen::VectorXd& delta, const DemandData& data,
                     const Eigen::MatrixXd& weight);

// Stacked instrument matrix [X, Z_file] used by the GMM objective and the
// influence computation.
Eigen::MatrixXd instrument_matrix(const DemandData& data);
Eigen::MatrixXd default_weight(const DemandData& data);

struct EstimateOptions {
  double tol = 1e-9;
  int max_iter = 500;
  double contraction_tol = 1e-12;
  int contraction_max_iter = 10000;
  double gradient_step = 1e-6;  // relative, central differences
  bool with_influence = true;
};

// Inverts shares per market, minimizes Q by BFGS with numerical gradients and
// Armijo backtracking, then fills influence/G. Hitting max_iter returns
// converged=false (the caller decides whether that is fatal); a dead line
// search with a non-small gradient throws LineSearchFailure.
FirstStageEstimate estimate_demand(DemandData& data, const Draws& draws,
                                   const Eigen::MatrixXd& weight,
                                   const Eigen::VectorXd& init,
                                   const EstimateOptions& opt = {});

}  // namespace sepmi
