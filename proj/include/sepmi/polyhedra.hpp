#pragma once

#include <Eigen/Dense>
#include <vector>

namespace sepmi {

// Vertex-based elimination of the nuisance block: the system
// {exists delta : C delta >= B mu - d} collapses to A mu <= b with
// A = H B and b = H d, where the rows of H are the vertices of
// {h >= 0, C'h = 0, 1'h = 1}.
struct EliminationResult {
  Eigen::MatrixXd H;  // one vertex per row, length k
  Eigen::MatrixXd A;  // H * B
  Eigen::VectorXd b;  // H * d
};

// Enumerates the vertices of {h in R^k : h >= 0, C'h = 0, 1'h = 1} by
// iterating over all supports of size rank([C'; 1']), solving the square
// subsystems, keeping feasible solutions, and deduplicating (inf-norm 1e-7).
// Vertices are returned in lexicographic order. Empty polyhedron -> empty
// list; k beyond the cap -> DimensionTooLarge.
std::vector<Eigen::VectorXd> enumerate_h(const Eigen::MatrixXd& C,
                                         int cap = 15);

EliminationResult eliminate_nuisance(const Eigen::MatrixXd& B,
                                     const Eigen::MatrixXd& C,
                                     const Eigen::VectorXd& d, int cap = 15);

// Direct LP check of {delta : C delta >= B mu - d} != {} via phase-one
// simplex. Restricted to the oracle envelope d_N <= 3, k <= 8.
bool nuisance_feasible(const Eigen::MatrixXd& B, const Eigen::MatrixXd& C,
                       const Eigen::VectorXd& d, const Eigen::VectorXd& mu);

}  // namespace sepmi
