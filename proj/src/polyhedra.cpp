#include "sepmi/polyhedra.hpp"

#include <algorithm>
#include <string>

#include "sepmi/errors.hpp"
#include "sepmi/simplex.hpp"

namespace sepmi {

namespace {

constexpr double kFeasTol = 1e-9;
constexpr double kDedupTol = 1e-7;

bool lex_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a(i) != b(i)) return a(i) < b(i);
  }
  return false;
}

}  // namespace

std::vector<Eigen::VectorXd> enumerate_h(const Eigen::MatrixXd& C, int cap) {
  const Eigen::Index k = C.rows();
  if (k < 1) throw ShapeMismatch("enumerate_h: need k >= 1 rows");
  if (k > cap) {
    throw DimensionTooLarge("enumerate_h: k = " + std::to_string(k) +
                            " exceeds enumeration cap " + std::to_string(cap));
  }

  // Equality block E = [C'; 1'], rhs e = (0,...,0,1). A vertex is a basic
  // feasible solution: support S with |S| = rank(E), E_S full column rank,
  // consistent solution, h_S >= 0.
  const Eigen::Index dn = C.cols();
  Eigen::MatrixXd E(dn + 1, k);
  E.topRows(dn) = C.transpose();
  E.bottomRows(1).setOnes();
  Eigen::VectorXd e = Eigen::VectorXd::Zero(dn + 1);
  e(dn) = 1.0;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd_full(E);
  const double smax = svd_full.singularValues().size() > 0
                          ? svd_full.singularValues()(0)
                          : 0.0;
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < svd_full.singularValues().size(); ++i) {
    if (svd_full.singularValues()(i) > 1e-10 * smax) ++r;
  }
  if (r == 0) return {};  // only possible when E = 0, but then 1'h=1 fails

  std::vector<Eigen::VectorXd> vertices;
  std::vector<Eigen::Index> support(static_cast<std::size_t>(r));
  for (Eigen::Index i = 0; i < r; ++i) support[static_cast<std::size_t>(i)] = i;

  for (;;) {
    Eigen::MatrixXd Es(dn + 1, r);
    for (Eigen::Index c = 0; c < r; ++c) {
      Es.col(c) = E.col(support[static_cast<std::size_t>(c)]);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Es, Eigen::ComputeThinU |
                                                  Eigen::ComputeThinV);
    const double s0 = svd.singularValues()(0);
    bool full_rank = s0 > 0.0;
    for (Eigen::Index i = 0; i < r && full_rank; ++i) {
      if (svd.singularValues()(i) <= 1e-10 * s0) full_rank = false;
    }
    if (full_rank) {
      Eigen::VectorXd hs = svd.solve(e);
      bool ok = (Es * hs - e).cwiseAbs().maxCoeff() <= kFeasTol &&
                hs.minCoeff() >= -kFeasTol;
      if (ok) {
        Eigen::VectorXd h = Eigen::VectorXd::Zero(k);
        for (Eigen::Index c = 0; c < r; ++c) {
          h(support[static_cast<std::size_t>(c)]) = std::max(hs(c), 0.0);
        }
        bool dup = false;
        for (const auto& v : vertices) {
          if ((v - h).cwiseAbs().maxCoeff() <= kDedupTol) {
            dup = true;
            break;
          }
        }
        if (!dup) vertices.push_back(std::move(h));
      }
    }

    // Next combination of size r out of k, lexicographic.
    Eigen::Index pos = r - 1;
    while (pos >= 0 &&
           support[static_cast<std::size_t>(pos)] == k - r + pos) {
      --pos;
    }
    if (pos < 0) break;
    ++support[static_cast<std::size_t>(pos)];
    for (Eigen::Index c = pos + 1; c < r; ++c) {
      support[static_cast<std::size_t>(c)] =
          support[static_cast<std::size_t>(c - 1)] + 1;
    }
  }

  std::sort(vertices.begin(), vertices.end(), lex_less);
  return vertices;
}

EliminationResult eliminate_nuisance(const Eigen::MatrixXd& B,
                                     const Eigen::MatrixXd& C,
                                     const Eigen::VectorXd& d, int cap) {
  const Eigen::Index k = C.rows();
  if (B.rows() != k || d.size() != k) {
    throw ShapeMismatch("eliminate_nuisance: B, C, d row counts differ");
  }
  auto vertices = enumerate_h(C, cap);
  EliminationResult out;
  const Eigen::Index v = static_cast<Eigen::Index>(vertices.size());
  out.H.resize(v, k);
  for (Eigen::Index i = 0; i < v; ++i) {
    out.H.row(i) = vertices[static_cast<std::size_t>(i)].transpose();
  }
  out.A = out.H * B;
  out.b = out.H * d;
  return out;
}

bool nuisance_feasible(const Eigen::MatrixXd& B, const Eigen::MatrixXd& C,
                       const Eigen::VectorXd& d, const Eigen::VectorXd& mu) {
  const Eigen::Index k = C.rows();
  if (B.rows() != k || d.size() != k || B.cols() != mu.size()) {
    throw ShapeMismatch("nuisance_feasible: shapes do not conform");
  }
  if (C.cols() > 3 || k > 8) {
    throw DimensionTooLarge(
        "nuisance_feasible: oracle path supports d_N <= 3 and k <= 8");
  }
  // C delta >= B mu - d  <=>  (-C) delta <= d - B mu.
  return linear_feasible(-C, d - B * mu, kFeasTol);
}

}  // namespace sepmi
