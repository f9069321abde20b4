#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sepmi/qp.hpp"
#include "sepmi/stats.hpp"

namespace sepmi {

// Decision record of the refined chi-squared test at one hypothesized theta.
struct RccResult {
  double T = 0.0;
  int r_hat = 0;
  double z = 0.0;        // +inf when the slackness infimum is empty/not used
  double beta = 0.0;     // 2 alpha Phi(z) when r_hat == 1, alpha otherwise
  double critical = 0.0; // chi2 quantile at (r_hat, 1 - beta)
  bool reject = false;
  std::vector<int> active_rows;
  bool anchor_fallback = false;  // r_hat == 1 but no nonzero active row found
};

// Rank of the active-row submatrix via SVD with relative threshold 1e-10.
int active_rank(const Eigen::MatrixXd& A, const std::vector<int>& active_rows);

// Infimum over rows j != anchor_row of the standardized slack
//   z_j = sqrt(n) ||a_1||_S (rho_j - a_j'kappa) / (||a_1||_S ||a_j||_S - a_1'S a_j),
// +inf where the denominator vanishes (1e-12 relative; Cauchy-Schwarz makes
// it vanish exactly for positively Sigma-proportional rows). Negative slacks
// clamp to 0. Empty infimum = +inf.
double slackness_z(const Eigen::MatrixXd& A, const Eigen::VectorXd& rho,
                   const Eigen::VectorXd& kappa_hat, const SpdMatrix& Sigma,
                   double n, int anchor_row);

// Full decision: r_hat from the QP active set; when r_hat == 1 the slackness
// refinement is computed from the lowest-index nonzero active row against the
// rows outside the active set, giving beta = 2 alpha Phi(z); otherwise
// beta = alpha. Rejects iff T > chi2_quantile(r_hat, 1 - beta).
RccResult rcc_decide(const QpSolution& qp, const Eigen::MatrixXd& A,
                     const Eigen::VectorXd& rho, const SpdMatrix& Sigma,
                     double n, double alpha);

}  // namespace sepmi
