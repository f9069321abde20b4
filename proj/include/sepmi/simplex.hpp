#pragma once

#include <Eigen/Dense>

namespace sepmi {

// Phase-one simplex feasibility test for {x in R^n : G x <= g} with x free.
// Splits x into positive/negative parts, adds slacks and artificials, and
// minimizes the artificial sum with Bland's rule (no cycling). Returns true
// iff the minimum artificial sum is <= tol.
bool linear_feasible(const Eigen::MatrixXd& G, const Eigen::VectorXd& g,
                     double tol = 1e-9);

}  // namespace sepmi
