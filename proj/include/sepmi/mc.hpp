#pragma once

#include <Eigen/Dense>

#include <cstdint>

#include "sepmi/demand.hpp"
#include "sepmi/market.hpp"

namespace sepmi {

// Declared relation between A mu and rho in a Gaussian size design.
enum class MuRelation { Boundary, Interior, Violated };

// Finite-sample Gaussian experiment: p_bar ~ N(mu, Sigma/n) is drawn
// directly and Sigma is fed to the decision as known, so the normality and
// known-variance assumptions hold exactly and the boundary case is a sharp
// alpha calibration target.
struct SizeStudyDesign {
  Eigen::MatrixXd A;
  Eigen::VectorXd rho;
  Eigen::MatrixXd Sigma;  // SPD
  Eigen::VectorXd mu;
  MuRelation relation = MuRelation::Boundary;
  double n = 100.0;
  int reps = 10000;
  double alpha = 0.05;
  std::uint64_t seed = 0;

  // ConfigInvalid on dimension mismatches, non-SPD Sigma, A identically
  // zero, n <= 0, reps < 100, bad alpha, or mu off the declared relation
  // (boundary must satisfy A mu = rho exactly).
  void validate() const;
};

struct SizeStudyResult {
  double rejection_rate = 0.0;
  double se = 0.0;  // binomial sqrt(r(1-r)/reps)
  int reps = 0;     // replications actually run
  int rejected = 0;
  bool truncated = false;  // interrupted before every rep ran
};

// Per rep: counter-seeded Gaussian draw of p_bar, projection QP, refined
// decision at design.alpha. Outcomes land in a pre-sized slot table and the
// reduction is an exact integer sum, so the worker count never changes the
// result. Kernel errors propagate.
SizeStudyResult run_size_study(const SizeStudyDesign& design, int workers = 0);

// Full-pipeline coverage experiment at the data-generating theta*.
struct CoverageConfig {
  DgpConfig dgp;
  double alpha = 0.05;
  int reps = 500;
  std::uint64_t seed = 0;
  EstimateOptions first_stage;  // with_influence is forced on
  double jacobian_step = 1e-5;
};

struct CoverageResult {
  double coverage_rate = 0.0;  // accepted / completed
  double se = 0.0;
  bool se_defined = false;  // needs >= 2 completed reps
  int reps = 0;             // requested
  int completed = 0;        // reps that reached a decision
  int accepted = 0;
  int dgp_failures = 0;          // synthesis failed or produced no events
  int first_stage_failures = 0;  // estimation threw or did not converge
  int decision_failures = 0;     // downstream kernel errors
  bool truncated = false;
};

// Per rep (counter-derived seed): synthesize a panel, estimate the first
// stage, remap its influence to the event observations, build the corrected
// covariance, and run the refined decision at theta*. Failed reps are
// counted by stage and excluded from the rate's denominator. A bad dgp
// config is rep-independent and throws instead of burning every rep.
CoverageResult run_coverage_study(const CoverageConfig& config,
                                  int workers = 0);

}  // namespace sepmi
