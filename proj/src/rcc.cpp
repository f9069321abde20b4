#include "sepmi/rcc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sepmi/errors.hpp"

namespace sepmi {

int active_rank(const Eigen::MatrixXd& A, const std::vector<int>& active_rows) {
  if (active_rows.empty()) return 0;
  Eigen::MatrixXd sub(static_cast<Eigen::Index>(active_rows.size()), A.cols());
  for (std::size_t i = 0; i < active_rows.size(); ++i) {
    int l = active_rows[i];
    if (l < 0 || l >= A.rows()) {
      throw ShapeMismatch("active_rank: row index out of range");
    }
    sub.row(static_cast<Eigen::Index>(i)) = A.row(l);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(sub);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > 1e-10 * sv(0)) ++r;
  }
  return r;
}

double slackness_z(const Eigen::MatrixXd& A, const Eigen::VectorXd& rho,
                   const Eigen::VectorXd& kappa_hat, const SpdMatrix& Sigma,
                   double n, int anchor_row) {
  if (A.cols() != kappa_hat.size() || A.rows() != rho.size() ||
      Sigma.dim() != A.cols()) {
    throw ShapeMismatch("slackness_z: shapes do not conform");
  }
  if (anchor_row < 0 || anchor_row >= A.rows()) {
    throw AnchorNotActive("slackness_z: anchor row index out of range");
  }
  Eigen::VectorXd a1 = A.row(anchor_row).transpose();
  if (a1.cwiseAbs().maxCoeff() == 0.0) {
    throw ZeroAnchorRow("slackness_z: anchor row is identically zero");
  }
  const double resid1 = a1.dot(kappa_hat) - rho(anchor_row);
  if (std::fabs(resid1) > kQpActiveTol * (1.0 + std::fabs(rho(anchor_row)))) {
    throw AnchorNotActive("slackness_z: anchor row is not active");
  }

  const Eigen::MatrixXd& S = Sigma.dense();
  const Eigen::VectorXd Sa1 = S * a1;
  const double norm1 = std::sqrt(a1.dot(Sa1));
  const double inf = std::numeric_limits<double>::infinity();
  double z = inf;
  for (Eigen::Index j = 0; j < A.rows(); ++j) {
    if (j == anchor_row) continue;
    Eigen::VectorXd aj = A.row(j).transpose();
    const double normj = std::sqrt(aj.dot(S * aj));
    const double cross = Sa1.dot(aj);
    const double denom = norm1 * normj - cross;
    if (denom <= 1e-12 * std::max(norm1 * normj, 1e-300)) continue;  // +inf
    double zj = std::sqrt(n) * norm1 * (rho(j) - aj.dot(kappa_hat)) / denom;
    z = std::min(z, std::max(zj, 0.0));
  }
  return z;
}

RccResult rcc_decide(const QpSolution& qp, const Eigen::MatrixXd& A,
                     const Eigen::VectorXd& rho, const SpdMatrix& Sigma,
                     double n, double alpha) {
  if (!(alpha > 0.0 && alpha <= 0.5)) {
    throw ConfigInvalid("rcc_decide: alpha must lie in (0, 1/2]");
  }
  RccResult out;
  out.T = qp.T;
  out.active_rows = qp.active_rows;
  out.r_hat = active_rank(A, qp.active_rows);
  out.z = std::numeric_limits<double>::infinity();

  if (out.r_hat == 1) {
    int anchor = -1;
    for (int l : qp.active_rows) {
      if (A.row(l).cwiseAbs().maxCoeff() > 0.0) {
        anchor = l;
        break;
      }
    }
    if (anchor < 0) {
      // Rank one forces a nonzero active row; kept as a defensive fallback.
      out.anchor_fallback = true;
      out.beta = alpha;
    } else {
      // Slackness is measured against rows outside the active set only.
      std::vector<int> keep;
      keep.push_back(anchor);
      for (int l = 0; l < static_cast<int>(A.rows()); ++l) {
        if (std::find(qp.active_rows.begin(), qp.active_rows.end(), l) ==
            qp.active_rows.end()) {
          keep.push_back(l);
        }
      }
      Eigen::MatrixXd Asub(static_cast<Eigen::Index>(keep.size()), A.cols());
      Eigen::VectorXd rsub(static_cast<Eigen::Index>(keep.size()));
      for (std::size_t i = 0; i < keep.size(); ++i) {
        Asub.row(static_cast<Eigen::Index>(i)) = A.row(keep[i]);
        rsub(static_cast<Eigen::Index>(i)) = rho(keep[i]);
      }
      out.z = slackness_z(Asub, rsub, qp.kappa_hat, Sigma, n, 0);
      out.beta = 2.0 * alpha * std_normal_cdf(out.z);
    }
  } else {
    out.beta = alpha;
  }

  const double level = 1.0 - out.beta;
  out.critical = level > 0.0 ? chi2_quantile(out.r_hat, level) : 0.0;
  out.reject = out.T > out.critical;
  return out;
}

}  // namespace sepmi
