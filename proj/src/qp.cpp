#include "sepmi/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sepmi/errors.hpp"
#include "sepmi/simplex.hpp"

namespace sepmi {

QpProblem::QpProblem(Eigen::VectorXd pbar_, SpdMatrix sigma_,
                     Eigen::MatrixXd a_, Eigen::VectorXd rho_, double n_)
    : pbar(std::move(pbar_)),
      Sigma(std::move(sigma_)),
      A(std::move(a_)),
      rho(std::move(rho_)),
      n(n_) {
  if (Sigma.dim() != pbar.size() || A.cols() != pbar.size() ||
      A.rows() != rho.size()) {
    throw ShapeMismatch("QpProblem: pbar/Sigma/A/rho shapes do not conform");
  }
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw ShapeMismatch("QpProblem: sample size must be positive");
  }
}

bool qp_feasible(const QpProblem& problem) {
  return linear_feasible(problem.A, problem.rho, kQpFeasTol);
}

namespace {

std::vector<int> residual_active_rows(const Eigen::MatrixXd& A,
                                      const Eigen::VectorXd& rho,
                                      const Eigen::VectorXd& kappa) {
  std::vector<int> active;
  for (Eigen::Index l = 0; l < A.rows(); ++l) {
    double resid = A.row(l).dot(kappa) - rho(l);
    if (std::fabs(resid) <= kQpActiveTol * (1.0 + std::fabs(rho(l)))) {
      active.push_back(static_cast<int>(l));
    }
  }
  return active;
}

// Solves M_WW u = v for the current working set via LLT of the Gram block.
Eigen::VectorXd solve_gram(const Eigen::MatrixXd& M, const std::vector<int>& W,
                           const Eigen::VectorXd& v) {
  const Eigen::Index w = static_cast<Eigen::Index>(W.size());
  Eigen::MatrixXd Mw(w, w);
  for (Eigen::Index i = 0; i < w; ++i) {
    for (Eigen::Index j = 0; j < w; ++j) {
      Mw(i, j) = M(W[static_cast<std::size_t>(i)], W[static_cast<std::size_t>(j)]);
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(Mw);
  if (llt.info() != Eigen::Success) {
    // Working-set Gram blocks stay positive definite by construction; a
    // failure here means accumulated roundoff, treated as a solver failure.
    throw MaxIterations("solve_projection: working-set Gram factorization failed");
  }
  return llt.solve(v);
}

}  // namespace

QpSolution solve_projection(const QpProblem& problem) {
  const Eigen::MatrixXd& A = problem.A;
  const Eigen::VectorXd& pbar = problem.pbar;
  const Eigen::VectorXd& rho = problem.rho;
  const Eigen::Index m = A.rows();
  const double n = problem.n;

  QpSolution sol;
  sol.multipliers = Eigen::VectorXd::Zero(m);

  // Short-circuit: pbar already feasible -> T = 0 exactly.
  Eigen::VectorXd c = m > 0 ? Eigen::VectorXd(A * pbar - rho)
                            : Eigen::VectorXd(0);
  if (m == 0 || c.maxCoeff() <= kQpFeasTol) {
    sol.kappa_hat = pbar;
    sol.T = 0.0;
    sol.active_rows = residual_active_rows(A, rho, pbar);
    return sol;
  }

  // Dual active set on lambda >= 0 with kappa(lambda) = pbar - (1/2) Sigma A' l.
  // M = A Sigma A' is the Gram matrix of the rows in the Sigma inner product.
  Eigen::MatrixXd SigmaAt = problem.Sigma.dense() * A.transpose();
  Eigen::MatrixXd M = A * SigmaAt;

  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
  std::vector<int> W;
  const long max_pivots = 200 + 60 * static_cast<long>(m);
  long pivots = 0;

  auto residual_of = [&](Eigen::Index j) {
    return c(j) - 0.5 * M.row(j).dot(lambda);
  };

  for (;;) {
    // Most violated constraint at the current iterate.
    Eigen::Index jstar = -1;
    double worst = kQpFeasTol;
    for (Eigen::Index j = 0; j < m; ++j) {
      double r = residual_of(j);
      if (r > worst) {
        worst = r;
        jstar = j;
      }
    }
    if (jstar < 0) break;

    // Inner loop: drive constraint jstar to zero residual, dropping blocking
    // working-set rows along the way.
    for (;;) {
      if (++pivots > max_pivots) {
        throw MaxIterations("solve_projection: pivot limit exceeded");
      }
      const Eigen::Index w = static_cast<Eigen::Index>(W.size());
      Eigen::VectorXd mWj(w);
      for (Eigen::Index i = 0; i < w; ++i) {
        mWj(i) = M(W[static_cast<std::size_t>(i)], jstar);
      }
      Eigen::VectorXd u =
          w > 0 ? solve_gram(M, W, mWj) : Eigen::VectorXd(0);
      double gamma = M(jstar, jstar) - (w > 0 ? mWj.dot(u) : 0.0);
      const double gamma_tol = 1e-11 * (1.0 + M(jstar, jstar));

      // Blocking step length along (-u, +1) in (lambda_W, lambda_j).
      double t_block = std::numeric_limits<double>::infinity();
      int block_pos = -1;
      for (Eigen::Index i = 0; i < w; ++i) {
        if (u(i) > 1e-13) {
          double t = lambda(W[static_cast<std::size_t>(i)]) / u(i);
          if (t < t_block - 1e-15 ||
              (t < t_block + 1e-15 && block_pos >= 0 &&
               W[static_cast<std::size_t>(i)] <
                   W[static_cast<std::size_t>(block_pos)])) {
            t_block = t;
            block_pos = static_cast<int>(i);
          }
        }
      }

      if (gamma <= gamma_tol) {
        // jstar's row is Sigma-dependent on the working set: a pure dual step.
        if (block_pos < 0) {
          // Unbounded dual ray => primal infeasible (confirm by phase-one).
          if (!qp_feasible(problem)) {
            throw Infeasible("solve_projection: constraint set is empty");
          }
          throw MaxIterations(
              "solve_projection: degenerate dual ray on feasible problem");
        }
        double t = t_block;
        for (Eigen::Index i = 0; i < w; ++i) {
          int row = W[static_cast<std::size_t>(i)];
          lambda(row) = std::max(0.0, lambda(row) - t * u(i));
        }
        lambda(jstar) += t;
        W.erase(W.begin() + block_pos);
        continue;
      }

      double r_j = residual_of(jstar);
      if (r_j <= kQpFeasTol) break;  // satisfied while dropping blockers
      double t_full = 2.0 * r_j / gamma;
      double t = std::min(t_full, t_block);
      for (Eigen::Index i = 0; i < w; ++i) {
        int row = W[static_cast<std::size_t>(i)];
        lambda(row) = std::max(0.0, lambda(row) - t * u(i));
      }
      lambda(jstar) += t;
      if (t_block < t_full) {
        W.erase(W.begin() + block_pos);
        continue;
      }
      W.push_back(static_cast<int>(jstar));
      std::sort(W.begin(), W.end());
      break;
    }
  }

  // Polish: exact equality-constrained solve on the final working set.
  Eigen::VectorXd kappa;
  if (W.empty()) {
    kappa = pbar;
    lambda.setZero();
  } else {
    const Eigen::Index w = static_cast<Eigen::Index>(W.size());
    Eigen::VectorXd cW(w);
    for (Eigen::Index i = 0; i < w; ++i) {
      cW(i) = c(W[static_cast<std::size_t>(i)]);
    }
    Eigen::VectorXd sw = solve_gram(M, W, cW);  // lambda_W = 2 sw
    bool polish_ok = sw.minCoeff() >= -1e-10;
    if (polish_ok) {
      Eigen::VectorXd trial = pbar;
      for (Eigen::Index i = 0; i < w; ++i) {
        trial -= SigmaAt.col(W[static_cast<std::size_t>(i)]) * sw(i);
      }
      if (m == 0 || (A * trial - rho).maxCoeff() <= kQpFeasTol) {
        kappa = trial;
        lambda.setZero();
        for (Eigen::Index i = 0; i < w; ++i) {
          lambda(W[static_cast<std::size_t>(i)]) = std::max(0.0, 2.0 * sw(i));
        }
      } else {
        polish_ok = false;
      }
    }
    if (!polish_ok) {
      kappa = pbar - 0.5 * SigmaAt * lambda;  // keep the converged GI iterate
    }
  }

  sol.kappa_hat = kappa;
  sol.T = W.empty() ? 0.0 : n * problem.Sigma.inv_quad_form(pbar - kappa);
  sol.multipliers = n * lambda;
  sol.active_rows = residual_active_rows(A, rho, kappa);
  return sol;
}

}  // namespace sepmi
