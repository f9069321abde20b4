#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sepmi/stats.hpp"

namespace sepmi {

// min over {kappa : A kappa <= rho} of n (pbar-kappa)' Sigma^{-1} (pbar-kappa).
struct QpProblem {
  QpProblem(Eigen::VectorXd pbar_, SpdMatrix sigma_, Eigen::MatrixXd a_,
            Eigen::VectorXd rho_, double n_);

  Eigen::VectorXd pbar;
  SpdMatrix Sigma;
  Eigen::MatrixXd A;    // d_A x dim
  Eigen::VectorXd rho;  // d_A
  double n;             // sample size (> 0)
};

struct QpSolution {
  Eigen::VectorXd kappa_hat;
  double T = 0.0;                // n-scaled squared projection distance
  Eigen::VectorXd multipliers;   // KKT multipliers of the n-scaled objective
  std::vector<int> active_rows;  // all rows with |a_l'k - rho_l| <= eps_act
};

// Relative tolerance defining the active set, and the absolute feasibility
// tolerance on A kappa <= rho.
inline constexpr double kQpActiveTol = 1e-7;
inline constexpr double kQpFeasTol = 1e-9;

// Phase-one feasibility of {kappa : A kappa <= rho}.
bool qp_feasible(const QpProblem& problem);

// Dual active-set (Goldfarb–Idnani) solve. Throws Infeasible when the
// constraint set is empty, MaxIterations if the pivot guard trips.
QpSolution solve_projection(const QpProblem& problem);

}  // namespace sepmi
