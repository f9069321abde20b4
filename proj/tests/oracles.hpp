// Test-side reference implementations, deliberately built on different
// numerical routes than the library: quadrature where the library uses
// closed forms or series, dense reassembly where it uses factored products,
// grid refinement where it uses an active-set solver. Slow and simple.
#pragma once

#include <Eigen/Dense>

#include <functional>

#include "sepmi/demand.hpp"
#include "sepmi/qp.hpp"
#include "sepmi/two_stage.hpp"

namespace oracles {

// Adaptive Simpson quadrature of f over [a, b] to absolute tolerance tol.
double simpson(const std::function<double(double)>& f, double a, double b,
               double tol = 1e-12);

// Phi(x) by quadrature of the standard normal density.
double normal_cdf(double x);

// Phi^{-1}(p) by bisection on the quadrature CDF.
double normal_quantile(double p);

// Regularized lower incomplete gamma P(a, x), a >= 1/2, by quadrature under
// the substitution t = u^2 (the transformed integrand is smooth).
double gamma_p(double a, double x);

// Chi-squared CDF and quantile on the quadrature route; df = 0 is the point
// mass at zero.
double chi2_cdf(int df, double x);
double chi2_quantile(int df, double p);

// min over {A kappa <= rho} of n (pbar-kappa)' Sigma^{-1} (pbar-kappa) for
// 2-D kappa by staged grid refinement (coarse box scan, then shrink around
// the incumbent). Accurate to ~1e-5 on unit-scale problems.
double qp_grid_2d(const Eigen::VectorXd& pbar, const Eigen::MatrixXd& Sigma,
                  const Eigen::MatrixXd& A, const Eigen::VectorXd& rho,
                  double n);

// KKT residuals of a returned projection solution under the n-scaled
// objective: gradient 2n Sigma^{-1}(kappa - pbar) plus A' lambda.
struct KktResiduals {
  double stationarity = 0.0;     // inf-norm of grad + A' lambda
  double primal = 0.0;           // largest positive constraint violation
  double dual = 0.0;             // largest negative multiplier, floored at 0
  double complementarity = 0.0;  // max_l |lambda_l (a_l' kappa - rho_l)|
  double worst() const;
};
KktResiduals kkt_residuals(const sepmi::QpProblem& problem,
                           const sepmi::QpSolution& sol);

// Berry logit inversion: zeta_j = ln s_j - ln s_0, s_0 the outside share.
Eigen::VectorXd logit_zeta(const Eigen::VectorXd& shares);

// xi' Z W Z' xi through the explicit n x n matrix Z W Z' (the library
// contracts through the m-vector Z' xi instead).
double gmm_objective_dense(const sepmi::DemandData& data,
                           const Eigen::VectorXd& delta,
                           const Eigen::MatrixXd& weight);

// One-sided forward-difference Jacobian of the mean moment stack in delta
// (the library differences centrally).
Eigen::MatrixXd jacobian_forward(const sepmi::MomentModel& model,
                                 const Eigen::VectorXd& theta,
                                 const Eigen::VectorXd& delta, double step);

}  // namespace oracles
