#include <doctest.h>

#include <Eigen/Dense>

#include <random>
#include <vector>

#include "sepmi/errors.hpp"
#include "sepmi/polyhedra.hpp"

using namespace sepmi;

namespace {

// Random Lemma-1 instance with integer entries in [-3, 3].
struct Instance {
  Eigen::MatrixXd B, C;
  Eigen::VectorXd d;
};

Instance random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> ks(1, 6), dms(1, 3), dns(1, 2),
      entry(-3, 3);
  Instance inst;
  const int k = ks(rng), dm = dms(rng), dn = dns(rng);
  inst.B.resize(k, dm);
  inst.C.resize(k, dn);
  inst.d.resize(k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < dm; ++j) inst.B(i, j) = entry(rng);
    for (int j = 0; j < dn; ++j) inst.C(i, j) = entry(rng);
    inst.d(i) = entry(rng);
  }
  return inst;
}

void check_vertex_invariants(const Eigen::MatrixXd& C,
                             const std::vector<Eigen::VectorXd>& hs) {
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(C.rows(), 1);
  Eigen::MatrixXd eq(C.cols() + 1, C.rows());
  eq.topRows(C.cols()) = C.transpose();
  eq.bottomRows(1) = ones.transpose();
  const int rank = static_cast<int>(
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(eq).rank());
  for (std::size_t a = 0; a < hs.size(); ++a) {
    const Eigen::VectorXd& h = hs[a];
    CHECK(h.minCoeff() >= -1e-9);
    if (C.cols() > 0) {
      CHECK((C.transpose() * h).cwiseAbs().maxCoeff() <= 1e-9);
    }
    CHECK(std::abs(h.sum() - 1.0) <= 1e-9);
    // Basic solution: at least k - rank([C'; 1']) active nonnegativity rows.
    int zeros = 0;
    for (Eigen::Index i = 0; i < h.size(); ++i) zeros += h(i) <= 1e-9;
    CHECK(zeros >= static_cast<int>(h.size()) - rank);
    for (std::size_t b = a + 1; b < hs.size(); ++b) {
      CHECK((h - hs[b]).cwiseAbs().maxCoeff() > 1e-7);
    }
  }
}

}  // namespace

TEST_CASE("enumerate_h: zero C gives the simplex vertices") {
  const auto hs = enumerate_h(Eigen::MatrixXd::Zero(3, 1));
  REQUIRE(hs.size() == 3);
  // Lexicographic order: e3 = (0,0,1) < e2 = (0,1,0) < e1 = (1,0,0).
  CHECK((hs[0] - Eigen::Vector3d(0, 0, 1)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((hs[1] - Eigen::Vector3d(0, 1, 0)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((hs[2] - Eigen::Vector3d(1, 0, 0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("enumerate_h: identity C forces the empty polyhedron") {
  CHECK(enumerate_h(Eigen::MatrixXd::Identity(2, 2)).empty());
}

TEST_CASE("enumerate_h: opposite signs average to one vertex") {
  Eigen::MatrixXd c(2, 1);
  c << 1.0, -1.0;
  const auto hs = enumerate_h(c);
  REQUIRE(hs.size() == 1);
  CHECK(hs[0](0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(hs[0](1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("enumerate_h: cap guards the combinatorial blowup") {
  CHECK_THROWS_AS(enumerate_h(Eigen::MatrixXd::Zero(16, 1)),
                  DimensionTooLarge);
  CHECK_THROWS_AS(enumerate_h(Eigen::MatrixXd::Zero(5, 1), 4),
                  DimensionTooLarge);
}

TEST_CASE("enumerate_h: vertex invariants and deterministic order") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 60; ++trial) {
    const Instance inst = random_instance(rng);
    const auto hs = enumerate_h(inst.C);
    check_vertex_invariants(inst.C, hs);
    const auto again = enumerate_h(inst.C);
    REQUIRE(again.size() == hs.size());
    for (std::size_t i = 0; i < hs.size(); ++i) {
      CHECK((hs[i] - again[i]).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("eliminate_nuisance: zero C echoes B and d") {
  const EliminationResult res =
      eliminate_nuisance(Eigen::MatrixXd::Identity(3, 3),
                         Eigen::MatrixXd::Zero(3, 1), Eigen::Vector3d(1, 2, 3));
  REQUIRE(res.A.rows() == 3);
  // H is the identity up to the lexicographic vertex order e3, e2, e1.
  Eigen::MatrixXd expected_a(3, 3);
  expected_a << 0, 0, 1, 0, 1, 0, 1, 0, 0;
  CHECK((res.A - expected_a).cwiseAbs().maxCoeff() == 0.0);
  CHECK((res.b - Eigen::Vector3d(3, 2, 1)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("eliminate_nuisance: vacuous system when the polyhedron is empty") {
  Eigen::MatrixXd b(2, 2);
  b << 1, 0, 0, 1;
  const EliminationResult res = eliminate_nuisance(
      b, Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d(0, 0));
  CHECK(res.A.rows() == 0);
  CHECK(res.b.size() == 0);
}

TEST_CASE("eliminate_nuisance: single averaged row") {
  Eigen::MatrixXd c(2, 1);
  c << 1.0, -1.0;
  const EliminationResult res = eliminate_nuisance(
      Eigen::MatrixXd::Identity(2, 2), c, Eigen::Vector2d(0, 0));
  REQUIRE(res.A.rows() == 1);
  CHECK(res.A(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(res.A(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(res.b(0) == 0.0);
}

TEST_CASE("nuisance_feasible: fixed cases") {
  const Eigen::MatrixXd b2 = Eigen::MatrixXd::Identity(2, 2);
  const Eigen::MatrixXd c0 = Eigen::MatrixXd::Zero(2, 1);
  const Eigen::VectorXd d0 = Eigen::VectorXd::Zero(2);
  CHECK(nuisance_feasible(b2, c0, d0, Eigen::Vector2d(-1, -1)));
  CHECK_FALSE(nuisance_feasible(b2, c0, d0, Eigen::Vector2d(1, 0)));

  Eigen::MatrixXd c(2, 1);
  c << 1.0, -1.0;
  // delta must satisfy delta >= 1 and -delta >= -2, i.e. delta in [1, 2].
  CHECK(nuisance_feasible(b2, c, d0, Eigen::Vector2d(1, -2)));
}

TEST_CASE("nuisance_feasible: oracle envelope enforced") {
  CHECK_THROWS_AS(
      nuisance_feasible(Eigen::MatrixXd::Ones(9, 1), Eigen::MatrixXd::Ones(9, 1),
                        Eigen::VectorXd::Zero(9), Eigen::VectorXd::Zero(1)),
      DimensionTooLarge);
  CHECK_THROWS_AS(
      nuisance_feasible(Eigen::MatrixXd::Ones(2, 1), Eigen::MatrixXd::Ones(2, 4),
                        Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(1)),
      DimensionTooLarge);
}

TEST_CASE("Lemma-1 equivalence on random instances") {
  // Reduced sweep; the acceptance gate runs the full 500 x 20 version.
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> mu_dist(-4.0, 4.0);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Instance inst = random_instance(rng);
    const EliminationResult res = eliminate_nuisance(inst.B, inst.C, inst.d);
    for (int rep = 0; rep < 10; ++rep) {
      Eigen::VectorXd mu(inst.B.cols());
      for (Eigen::Index i = 0; i < mu.size(); ++i) mu(i) = mu_dist(rng);
      const bool by_lp = nuisance_feasible(inst.B, inst.C, inst.d, mu);
      const bool by_elim =
          res.A.rows() == 0 ||
          ((res.A * mu - res.b).array() <= 1e-9).all();
      CHECK(by_lp == by_elim);
      ++checked;
    }
  }
  CHECK(checked == 1000);
}
