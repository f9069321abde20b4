#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sepmi/rcc.hpp"
#include "sepmi/two_stage.hpp"

namespace sepmi {

// One theta axis: a fixed value (count == 1) or count equally spaced
// coordinates on [lo, hi].
struct GridDim {
  std::string label;
  double lo = 0.0;
  double hi = 0.0;
  int count = 1;

  static GridDim fixed(std::string label, double value);
  static GridDim range(std::string label, double lo, double hi, int count);

  // Coordinate idx in [0, count); both endpoints land exactly on lo / hi.
  double value_at(int idx) const;
};

// Theta grid plus the test level. Flattening is row-major in declared
// dimension order (last dimension fastest); point_at is the single source of
// grid coordinates and is also what slice values are matched against.
struct GridSpec {
  std::vector<GridDim> dims;
  double alpha = 0.05;

  void validate() const;  // ConfigInvalid on any bad dimension or alpha
  std::size_t total_points() const;
  Eigen::VectorXd point_at(std::size_t flat) const;
};

// Decision at one grid point. Failed evaluations are kept as undecided
// rather than aborting the sweep; undecided points never enter the accepted
// set.
struct GridPointResult {
  Eigen::VectorXd theta;
  RccResult rcc;
  bool decided = false;
  std::string failure;  // diagnostic when undecided

  bool accepted() const { return decided && !rcc.reject; }
};

// Full sweep result: one entry per grid point in flat order.
struct ConfidenceGrid {
  GridSpec spec;
  std::vector<GridPointResult> points;
  std::uint64_t seed = 0;         // generating seed of the dataset swept
  std::string dataset_id;         // caller-supplied provenance tag
  std::string delta_fingerprint;  // hash of the first-stage delta used
  bool truncated = false;         // interrupted before every point ran

  std::size_t num_accepted() const;
  std::size_t num_undecided() const;
};

struct InvertOptions {
  int workers = 0;  // <= 0 means default_workers()
  double jacobian_step = 1e-5;
  std::uint64_t seed = 0;  // metadata only; the sweep itself draws nothing
  std::string dataset_id;
};

// Tests every grid theta: assembles A(theta) = [B, -C] and rho(theta),
// evaluates the mean moment stack and the influence-corrected covariance at
// (theta, delta_hat) — re-estimated per point, since the moments move with
// theta — then projects and applies the refined chi-squared decision at
// spec.alpha. first_stage.influence must be aligned with the model's
// observations (one psi per observation). Per-point solver failures are
// recorded as undecided; upfront validation failures (unconverged first
// stage, bad grid, mismatched influence, wrong theta dimension) throw.
// Points are independent, so worker count never changes any decision.
ConfidenceGrid invert_test(const GridSpec& spec, const MomentModel& model,
                           const FirstStageEstimate& first_stage,
                           const InvertOptions& opt = {});

// Writes a two-dimensional slice of the grid as CSV: every dimension except
// two pinned by `fixed` (label -> value, matched against grid coordinates to
// 1e-12 relative tolerance), the remaining two varying row-major in declared
// order. Columns: <free1>,<free2>,accepted,T,r_hat,beta,critical. Undecided
// points write accepted = 0, r_hat = -1 and nan statistics. Lines beginning
// with '#' carry version/seed/fingerprint metadata; extra_comments are
// appended to that block.
void export_slices(const ConfidenceGrid& grid,
                   const std::vector<std::pair<std::string, double>>& fixed,
                   const std::string& path,
                   const std::vector<std::string>& extra_comments = {});

// Full-grid JSON dump: schema field = 1, sorted keys, no timestamps, one
// record per point in flat order. extra_metadata merges into the metadata
// object (e.g. a config hash supplied by the caller).
void write_grid_json(
    const ConfidenceGrid& grid, const std::string& path,
    const std::vector<std::pair<std::string, std::string>>& extra_metadata =
        {});

}  // namespace sepmi
