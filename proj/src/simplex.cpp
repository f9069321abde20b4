#include "sepmi/simplex.hpp"

#include <vector>

#include "sepmi/errors.hpp"

namespace sepmi {

bool linear_feasible(const Eigen::MatrixXd& G, const Eigen::VectorXd& g,
                     double tol) {
  const Eigen::Index m = G.rows();
  const Eigen::Index n = G.cols();
  if (g.size() != m) throw ShapeMismatch("linear_feasible: G/g shape mismatch");
  if (m == 0) return true;  // no constraints

  // Standard form: G u - G v + s = g with u, v, s >= 0; rows with negative
  // rhs are sign-flipped and given an artificial variable.
  std::vector<Eigen::Index> art_rows;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (g(i) < 0.0) art_rows.push_back(i);
  }
  const Eigen::Index na = static_cast<Eigen::Index>(art_rows.size());
  const Eigen::Index ncols = 2 * n + m + na;

  Eigen::MatrixXd T(m, ncols);
  Eigen::VectorXd rhs(m);
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(m));
  T.setZero();
  Eigen::Index a = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double sign = (g(i) < 0.0) ? -1.0 : 1.0;
    T.block(i, 0, 1, n) = sign * G.row(i);
    T.block(i, n, 1, n) = -sign * G.row(i);
    T(i, 2 * n + i) = sign;  // slack
    rhs(i) = sign * g(i);
    if (g(i) < 0.0) {
      T(i, 2 * n + m + a) = 1.0;
      basis[static_cast<std::size_t>(i)] = 2 * n + m + a;
      ++a;
    } else {
      basis[static_cast<std::size_t>(i)] = 2 * n + i;
    }
  }
  if (na == 0) return true;  // all-slack basis is already feasible

  // Phase-one cost: 1 on artificials. Reduced cost r_j = c_j - sum over rows
  // with basic artificials of T(i, j); maintained implicitly via the tableau.
  Eigen::VectorXd cost = Eigen::VectorXd::Zero(ncols);
  for (Eigen::Index j = 2 * n + m; j < ncols; ++j) cost(j) = 1.0;

  const double pivot_tol = 1e-11;
  const long max_pivots = 200 + 40 * static_cast<long>(m + n);
  for (long pivots = 0; pivots < max_pivots; ++pivots) {
    // Objective value = sum of basic artificial values.
    double obj = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (cost(basis[static_cast<std::size_t>(i)]) > 0.0) obj += rhs(i);
    }
    if (obj <= tol) return true;

    // Reduced costs: r_j = c_j - c_B' B^{-1} A_j; tableau T is B^{-1} A.
    Eigen::Index enter = -1;
    for (Eigen::Index j = 0; j < ncols; ++j) {
      double r = cost(j);
      for (Eigen::Index i = 0; i < m; ++i) {
        if (cost(basis[static_cast<std::size_t>(i)]) > 0.0) r -= T(i, j);
      }
      if (r < -pivot_tol) {
        enter = j;  // Bland: first improving column
        break;
      }
    }
    if (enter < 0) return false;  // optimal with positive artificial sum

    // Ratio test, Bland tie-break on the leaving basic variable index.
    Eigen::Index leave = -1;
    double best = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (T(i, enter) > pivot_tol) {
        double ratio = rhs(i) / T(i, enter);
        if (leave < 0 || ratio < best - 1e-15 ||
            (ratio < best + 1e-15 &&
             basis[static_cast<std::size_t>(i)] <
                 basis[static_cast<std::size_t>(leave)])) {
          leave = i;
          best = ratio;
        }
      }
    }
    if (leave < 0) {
      // Unbounded descent direction cannot occur for a sum of nonnegative
      // artificials bounded below by zero.
      throw MaxIterations("linear_feasible: unbounded phase-one column");
    }

    double piv = T(leave, enter);
    T.row(leave) /= piv;
    rhs(leave) /= piv;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (i == leave) continue;
      double f = T(i, enter);
      if (f != 0.0) {
        T.row(i) -= f * T.row(leave);
        rhs(i) -= f * rhs(leave);
        if (rhs(i) < 0.0 && rhs(i) > -1e-12) rhs(i) = 0.0;
      }
    }
    basis[static_cast<std::size_t>(leave)] = enter;
  }
  throw MaxIterations("linear_feasible: pivot limit exceeded");
}

}  // namespace sepmi
