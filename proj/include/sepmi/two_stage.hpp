#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sepmi/stats.hpp"

namespace sepmi {

// First-stage estimate plus everything the variance correction needs.
struct FirstStageEstimate {
  Eigen::VectorXd delta_hat;
  std::vector<Eigen::VectorXd> influence;  // one psi(W_i, delta_hat) per obs
  Eigen::MatrixXd G;                       // sample average of dg/ddelta
  bool converged = false;
  double objective_value = 0.0;
  int iterations = 0;
  double grad_norm = 0.0;
};

// One application's separable moment system B(theta) M - C(theta) N <= rho:
// per-observation blocks M(W_i, theta) and N(W_i, theta, delta), with the
// nuisance delta entering N only.
class MomentModel {
 public:
  virtual ~MomentModel() = default;
  virtual int num_obs() const = 0;
  virtual int dim_m() const = 0;
  virtual int dim_n() const = 0;
  virtual Eigen::MatrixXd mat_b(const Eigen::VectorXd& theta) const = 0;
  virtual Eigen::MatrixXd mat_c(const Eigen::VectorXd& theta) const = 0;
  virtual Eigen::VectorXd vec_rho(const Eigen::VectorXd& theta) const = 0;
  virtual Eigen::VectorXd moment_m(int i, const Eigen::VectorXd& theta) const = 0;
  virtual Eigen::VectorXd moment_n(int i, const Eigen::VectorXd& theta,
                                   const Eigen::VectorXd& delta) const = 0;
};

// p(W_i, theta, delta) = [M; N] stack and its sample mean.
Eigen::VectorXd moment_p(const MomentModel& model, int i,
                         const Eigen::VectorXd& theta,
                         const Eigen::VectorXd& delta);
Eigen::VectorXd moment_pbar(const MomentModel& model,
                            const Eigen::VectorXd& theta,
                            const Eigen::VectorXd& delta);

// A(theta) = [B(theta), -C(theta)] acting on kappa = (mu_M, mu_N).
Eigen::MatrixXd constraint_matrix(const MomentModel& model,
                                  const Eigen::VectorXd& theta);

// Central-difference Jacobian of the mean moment stack in delta,
// column c stepped by step*(1+|delta_c|).
Eigen::MatrixXd jacobian_p_delta(const MomentModel& model,
                                 const Eigen::VectorXd& theta,
                                 const Eigen::VectorXd& delta_hat,
                                 double step = 1e-5);

// (1/n) sum_i [p_i + P psi_i][p_i + P psi_i]' with escalating ridge until the
// SPD factorization succeeds (lambda from 1e-10*trace/dim up to 1e-6*trace/dim).
SpdMatrix corrected_covariance(const MomentModel& model,
                               const Eigen::VectorXd& theta,
                               const FirstStageEstimate& first_stage,
                               const Eigen::MatrixXd& P);

// Influence values for the linear IV score g_i = z_i (zeta_i - x_i'beta + alpha p_i)
/// with delta = (beta, alpha): G by central differences, psi_i = -G^{-1} g_i.
// Exactly identified only (Z columns == delta dimension).
struct InfluenceResult {
  std::vector<Eigen::VectorXd> influence;
  Eigen::MatrixXd G;
};
InfluenceResult gmm_influence(const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& price,
                              const Eigen::VectorXd& zeta,
                              const Eigen::MatrixXd& Z,
                              const Eigen::VectorXd& delta_hat);

}  // namespace sepmi
