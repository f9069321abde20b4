#pragma once

#include <Eigen/Dense>
#include <vector>

namespace sepmi {

// Standard normal CDF via erfc; |error| < 1e-15, monotone, Phi(0) = 0.5.
double std_normal_cdf(double x);

// Regularized lower incomplete gamma P(a, x), a > 0, x >= 0.
// Series expansion for x < a + 1, Lentz continued fraction otherwise.
double gamma_p(double a, double x);

// Quantile of the chi-squared distribution with df >= 0 degrees of freedom.
// df = 0 is the point mass at zero, so the quantile is 0 for every p.
// Solves P(df/2, q/2) = p by bracketing + bisection; |P(q) - p| <= 1e-10.
double chi2_quantile(int df, double p);

// Symmetric positive definite matrix with its Cholesky factor, S = L L'.
// Construction rejects asymmetric input (1e-12 relative) and input whose
// factorization hits a non-positive pivot.
class SpdMatrix {
 public:
  explicit SpdMatrix(const Eigen::MatrixXd& S);

  const Eigen::MatrixXd& dense() const { return S_; }
  const Eigen::MatrixXd& chol() const { return L_; }
  Eigen::Index dim() const { return S_.rows(); }

  // Solves S x = b by forward/back substitution.
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& B) const;

  // x' S^{-1} x, nonnegative by construction.
  double inv_quad_form(const Eigen::VectorXd& x) const;

 private:
  Eigen::MatrixXd S_;
  Eigen::MatrixXd L_;
};

// Covariance of the rows with divisor n (not n-1). center = false gives the
// uncentered second moment (1/n) sum_i x_i x_i'.
Eigen::MatrixXd sample_covariance(const std::vector<Eigen::VectorXd>& rows,
                                  bool center);

}  // namespace sepmi
