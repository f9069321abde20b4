#include "sepmi/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sepmi/errors.hpp"

namespace sepmi {

double std_normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

namespace {

constexpr int kGammaMaxIter = 500;
constexpr double kGammaEps = 1e-15;

// Series representation: P(a,x) = x^a e^{-x} / Gamma(a) * sum x^n / (a)_{n+1}.
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < kGammaMaxIter; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * kGammaEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Modified Lentz continued fraction for Q(a,x); valid for x >= a + 1.
double gamma_q_cf(double a, double x) {
  const double tiny = std::numeric_limits<double>::min() / kGammaEps;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kGammaMaxIter; ++i) {
    double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kGammaEps) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double gamma_p(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0) || !std::isfinite(a) || !std::isfinite(x)) {
    throw ConfigInvalid("gamma_p: requires a > 0 and x >= 0");
  }
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

double chi2_quantile(int df, double p) {
  if (df < 0) throw ConfigInvalid("chi2_quantile: df must be >= 0");
  if (!(p > 0.0 && p < 1.0)) {
    throw ConfigInvalid("chi2_quantile: p must lie in (0, 1)");
  }
  if (df == 0) return 0.0;  // point mass at zero

  const double a = 0.5 * df;
  auto cdf = [&](double q) { return gamma_p(a, 0.5 * q); };

  // Bracket the root, then bisect; the CDF is strictly increasing on (0, inf).
  double lo = 0.0;
  double hi = df + 10.0 * std::sqrt(2.0 * df) + 10.0;
  while (cdf(hi) < p) {
    hi *= 2.0;
    if (hi > 1e308) throw NoConvergence("chi2_quantile: bracket overflow");
  }
  for (int it = 0; it < 400; ++it) {
    double mid = 0.5 * (lo + hi);
    if (cdf(mid) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo <= 1e-13 * (1.0 + hi)) break;
  }
  double q = 0.5 * (lo + hi);
  if (std::fabs(cdf(q) - p) > 1e-10) {
    throw NoConvergence("chi2_quantile: bisection failed to reach 1e-10");
  }
  return q;
}

SpdMatrix::SpdMatrix(const Eigen::MatrixXd& S) : S_(S) {
  if (S.rows() == 0 || S.rows() != S.cols()) {
    throw ShapeMismatch("SpdMatrix: square nonempty matrix required");
  }
  const double scale = S.cwiseAbs().maxCoeff();
  const double sym_tol = 1e-12 * (scale > 0.0 ? scale : 1.0);
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > sym_tol) {
    throw NotPositiveDefinite("SpdMatrix: input is not symmetric");
  }
  const Eigen::Index n = S.rows();
  L_ = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = S_(j, j) - L_.row(j).head(j).squaredNorm();
    if (!(d > 0.0) || !std::isfinite(d)) {
      throw NotPositiveDefinite("SpdMatrix: non-positive pivot at index " +
                                std::to_string(j));
    }
    L_(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = S_(i, j) - L_.row(i).head(j).dot(L_.row(j).head(j));
      L_(i, j) = s / L_(j, j);
    }
  }
}

Eigen::VectorXd SpdMatrix::solve(const Eigen::VectorXd& b) const {
  if (b.size() != dim()) throw ShapeMismatch("SpdMatrix::solve: size mismatch");
  Eigen::VectorXd y =
      L_.triangularView<Eigen::Lower>().solve(b);
  return L_.transpose().triangularView<Eigen::Upper>().solve(y);
}

Eigen::MatrixXd SpdMatrix::solve(const Eigen::MatrixXd& B) const {
  if (B.rows() != dim()) throw ShapeMismatch("SpdMatrix::solve: size mismatch");
  Eigen::MatrixXd y = L_.triangularView<Eigen::Lower>().solve(B);
  return L_.transpose().triangularView<Eigen::Upper>().solve(y);
}

double SpdMatrix::inv_quad_form(const Eigen::VectorXd& x) const {
  if (x.size() != dim()) {
    throw ShapeMismatch("SpdMatrix::inv_quad_form: size mismatch");
  }
  Eigen::VectorXd y = L_.triangularView<Eigen::Lower>().solve(x);
  return y.squaredNorm();
}

Eigen::MatrixXd sample_covariance(const std::vector<Eigen::VectorXd>& rows,
                                  bool center) {
  if (rows.empty()) throw EmptyData("sample_covariance: no rows");
  const Eigen::Index d = rows.front().size();
  if (d == 0) throw EmptyData("sample_covariance: zero-length rows");
  for (const auto& r : rows) {
    if (r.size() != d) throw RaggedRows("sample_covariance: ragged rows");
  }
  // Accumulate in a canonical (lexicographically sorted) order so the
  // result is exactly invariant under row permutation.
  std::vector<const Eigen::VectorXd*> order;
  order.reserve(rows.size());
  for (const auto& r : rows) order.push_back(&r);
  std::sort(order.begin(), order.end(),
            [d](const Eigen::VectorXd* a, const Eigen::VectorXd* b) {
              return std::lexicographical_compare(
                  a->data(), a->data() + d, b->data(), b->data() + d);
            });
  const double n = static_cast<double>(rows.size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  if (center) {
    for (const auto* r : order) mean += *r;
    mean /= n;
  }
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(d, d);
  for (const auto* r : order) {
    Eigen::VectorXd c = *r - mean;
    S.selfadjointView<Eigen::Lower>().rankUpdate(c, 1.0);
  }
  S = S.selfadjointView<Eigen::Lower>();
  return S / n;
}

}  // namespace sepmi
