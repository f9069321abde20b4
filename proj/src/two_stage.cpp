#include "sepmi/two_stage.hpp"

#include <cmath>
#include <string>

#include "sepmi/errors.hpp"

namespace sepmi {

Eigen::VectorXd moment_p(const MomentModel& model, int i,
                         const Eigen::VectorXd& theta,
                         const Eigen::VectorXd& delta) {
  Eigen::VectorXd p(model.dim_m() + model.dim_n());
  p.head(model.dim_m()) = model.moment_m(i, theta);
  p.tail(model.dim_n()) = model.moment_n(i, theta, delta);
  return p;
}

Eigen::VectorXd moment_pbar(const MomentModel& model,
                            const Eigen::VectorXd& theta,
                            const Eigen::VectorXd& delta) {
  const int n = model.num_obs();
  if (n < 1) throw EmptyData("moment_pbar: model has no observations");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(model.dim_m() + model.dim_n());
  for (int i = 0; i < n; ++i) acc += moment_p(model, i, theta, delta);
  return acc / static_cast<double>(n);
}

Eigen::MatrixXd constraint_matrix(const MomentModel& model,
                                  const Eigen::VectorXd& theta) {
  Eigen::MatrixXd B = model.mat_b(theta);
  Eigen::MatrixXd C = model.mat_c(theta);
  if (B.rows() != C.rows()) {
    throw ShapeMismatch("constraint_matrix: B and C row counts differ");
  }
  Eigen::MatrixXd A(B.rows(), B.cols() + C.cols());
  A << B, -C;
  return A;
}

Eigen::MatrixXd jacobian_p_delta(const MomentModel& model,
                                 const Eigen::VectorXd& theta,
                                 const Eigen::VectorXd& delta_hat,
                                 double step) {
  if (!(step > 0.0)) throw ConfigInvalid("jacobian_p_delta: step must be > 0");
  const Eigen::Index d = delta_hat.size();
  Eigen::MatrixXd P(model.dim_m() + model.dim_n(), d);
  for (Eigen::Index c = 0; c < d; ++c) {
    const double h = step * (1.0 + std::fabs(delta_hat(c)));
    Eigen::VectorXd hi = delta_hat, lo = delta_hat;
    hi(c) += h;
    lo(c) -= h;
    try {
      P.col(c) = (moment_pbar(model, theta, hi) - moment_pbar(model, theta, lo)) /
                 (2.0 * h);
    } catch (const std::exception& e) {
      throw EvaluationFailure(
          std::string("jacobian_p_delta: model failed inside the stencil: ") +
          e.what());
    }
  }
  return P;
}

SpdMatrix corrected_covariance(const MomentModel& model,
                               const Eigen::VectorXd& theta,
                               const FirstStageEstimate& first_stage,
                               const Eigen::MatrixXd& P) {
  const int n = model.num_obs();
  const Eigen::Index dim = model.dim_m() + model.dim_n();
  if (n < 2) throw ShapeMismatch("corrected_covariance: need n >= 2");
  if (static_cast<int>(first_stage.influence.size()) != n) {
    throw ShapeMismatch("corrected_covariance: influence list length != n");
  }
  if (P.rows() != dim || P.cols() != first_stage.delta_hat.size()) {
    throw ShapeMismatch("corrected_covariance: P has wrong shape");
  }

  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(dim, dim);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd& psi = first_stage.influence[static_cast<std::size_t>(i)];
    if (psi.size() != P.cols()) {
      throw ShapeMismatch("corrected_covariance: influence dimension mismatch");
    }
    Eigen::VectorXd mi = moment_p(model, i, theta, first_stage.delta_hat) + P * psi;
    S.selfadjointView<Eigen::Lower>().rankUpdate(mi, 1.0);
  }
  S = S.selfadjointView<Eigen::Lower>();
  S /= static_cast<double>(n);

  // Ridge escalation: lambda = 0, then 1e-10*trace/dim stepping x10 up to
  // 1e-6*trace/dim, until the factorization accepts the matrix.
  const double base = S.trace() / static_cast<double>(dim);
  const double lam_max = 1e-6 * base;
  double lam = 0.0;
  for (;;) {
    try {
      return SpdMatrix(S + lam * Eigen::MatrixXd::Identity(dim, dim));
    } catch (const NotPositiveDefinite&) {
      if (lam == 0.0) {
        lam = 1e-10 * base;
      } else {
        lam *= 10.0;
      }
      if (!(lam > 0.0) || lam > lam_max * (1.0 + 1e-12)) {
        throw NotPositiveDefinite(
            "corrected_covariance: ridge cap reached without an SPD matrix");
      }
    }
  }
}

InfluenceResult gmm_influence(const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& price,
                              const Eigen::VectorXd& zeta,
                              const Eigen::MatrixXd& Z,
                              const Eigen::VectorXd& delta_hat) {
  const Eigen::Index n = zeta.size();
  const Eigen::Index dx = X.cols();
  const Eigen::Index ddelta = delta_hat.size();
  if (X.rows() != n || price.size() != n || Z.rows() != n) {
    throw ShapeMismatch("gmm_influence: observation counts differ");
  }
  if (ddelta != dx + 1) {
    throw ShapeMismatch("gmm_influence: delta must stack (beta, alpha)");
  }
  if (Z.cols() != ddelta) {
    throw ShapeMismatch(
        "gmm_influence: exactly identified case required (Z cols == dim delta)");
  }
  if (n < 1) throw EmptyData("gmm_influence: no observations");

  auto mean_score = [&](const Eigen::VectorXd& delta) {
    Eigen::VectorXd xi = zeta + price * delta(dx);
    if (dx > 0) xi -= X * delta.head(dx);
    return Eigen::VectorXd(Z.transpose() * xi / static_cast<double>(n));
  };

  // G = d/d delta of the mean score, central differences (exact here up to
  // rounding because the score is linear in delta).
  Eigen::MatrixXd G(ddelta, ddelta);
  for (Eigen::Index c = 0; c < ddelta; ++c) {
    const double h = 1e-6 * (1.0 + std::fabs(delta_hat(c)));
    Eigen::VectorXd hi = delta_hat, lo = delta_hat;
    hi(c) += h;
    lo(c) -= h;
    G.col(c) = (mean_score(hi) - mean_score(lo)) / (2.0 * h);
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(G);
  const auto& sv = svd.singularValues();
  if (sv(sv.size() - 1) <= 0.0 || sv(0) / sv(sv.size() - 1) > 1e10) {
    throw SingularG("gmm_influence: G condition number exceeds 1e10");
  }

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(G);
  Eigen::VectorXd xi = zeta + price * delta_hat(dx);
  if (dx > 0) xi -= X * delta_hat.head(dx);

  InfluenceResult out;
  out.G = G;
  out.influence.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd gi = Z.row(i).transpose() * xi(i);
    out.influence.push_back(-lu.solve(gi));
  }
  return out;
}

}  // namespace sepmi
