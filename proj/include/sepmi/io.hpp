#pragma once

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

#include "sepmi/demand.hpp"
#include "sepmi/market.hpp"
#include "sepmi/two_stage.hpp"

namespace sepmi {

// key/value pairs rendered into the '#' metadata block (CSV) or the
// metadata object (JSON) of every output file; the tool version is always
// included. No timestamps, so seeded outputs are byte-reproducible.
using MetaLines = std::vector<std::pair<std::string, std::string>>;

// Demand panel CSV. Columns:
//   market,period,firm,product,gvwr,cab_over,compact_front,long_cab,
//   price,mc,quantity,market_size,instrument_1..instrument_m   (m >= 0)
// Rows of one market must be contiguous and share a single period;
// share = quantity / market_size is computed at ingestion. '#' lines and
// blank lines are skipped. SchemaInvalid on any header or cell deviation;
// IoFailure when the file cannot be opened.
DemandData read_demand_csv(const std::string& path);

// Writer counterpart (doubles as %.17g). The schema fixes four
// characteristic columns, so data.dim_x() must be 4.
void write_demand_csv(const DemandData& data, const std::string& path,
                      const MetaLines& meta = {});

// Events CSV with columns firm,period,product,kind; kind is the literal
// "entry" or "exit". Choice sets are not stored — they are reconstructed
// against the demand panel when the dataset is assembled.
std::vector<VehicleEvent> read_events_csv(const std::string& path);
void write_events_csv(const std::vector<VehicleEvent>& events,
                      const std::string& path, const MetaLines& meta = {});

// Headerless numeric CSV for the elimination matrices; '#' and blank lines
// skipped, ragged rows rejected, empty file reads as a 0 x 0 matrix.
Eigen::MatrixXd read_matrix_csv(const std::string& path);
void write_matrix_csv(const Eigen::MatrixXd& m, const std::string& path,
                      const MetaLines& meta = {});

// First-stage JSON: the point estimate plus fingerprints of the influence
// stack and Jacobian actually used downstream (the full vectors stay
// in-process; the fingerprints let a later run verify it is cross-checking
// against the same estimate).
void write_first_stage_json(const FirstStageEstimate& fs,
                            const std::string& path,
                            const MetaLines& meta = {});

struct FirstStageFile {
  Eigen::VectorXd delta_hat;
  double objective = 0.0;
  bool converged = false;
  int iterations = 0;
  std::string influence_fingerprint;
  std::string g_fingerprint;
};
FirstStageFile read_first_stage_json(const std::string& path);

// Truth JSON written next to a synthetic dataset: theta*, delta*, the draw
// settings, and a full generator-config echo.
void write_truth_json(const SynthResult& truth, const DgpConfig& config,
                      const std::string& path, const MetaLines& meta = {});

struct TruthFile {
  SunkCostTheta theta;
  Eigen::VectorXd delta;
};
TruthFile read_truth_json(const std::string& path);

}  // namespace sepmi
