#include <doctest.h>

#include <Eigen/Dense>

#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "sepmi/confset.hpp"
#include "sepmi/demand.hpp"
#include "sepmi/errors.hpp"
#include "sepmi/market.hpp"
#include "sepmi/two_stage.hpp"

using namespace sepmi;
namespace stdfs = std::filesystem;

namespace {

stdfs::path tmpdir() {
  const stdfs::path p = stdfs::temp_directory_path() / "sepmi_confset_tests";
  stdfs::create_directories(p);
  return p;
}

std::string slurp(const stdfs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Noiseless synthetic pipeline shared across the sweep tests: generate,
// estimate the demand stage, assemble the event model, and remap the
// influence values onto events.
struct Pipeline {
  SynthResult truth;
  DemandData demand;
  FirstStageEstimate fs;
  std::unique_ptr<VehicleMarketModel> model;
};

const Pipeline& pipeline() {
  static const Pipeline p = [] {
    Pipeline out;
    DgpConfig cfg;
    out.truth = synth_dgp(cfg, 1);
    out.demand = out.truth.demand;
    out.fs = estimate_demand(out.demand, out.truth.draws, Eigen::MatrixXd(),
                             Eigen::VectorXd::Zero(5), {});
    MarketDataset ds =
        make_market_dataset(out.demand, out.truth.events, out.truth.draws);
    out.model = std::make_unique<VehicleMarketModel>(std::move(ds));
    out.fs.influence =
        event_influence(out.model->data(), out.demand, out.fs.influence);
    return out;
  }();
  REQUIRE(p.fs.converged);
  return p;
}

// Grid with every theta coordinate pinned at the given values.
GridSpec point_grid(double lambda, const Eigen::VectorXd& eta, double alpha) {
  GridSpec spec;
  spec.alpha = alpha;
  spec.dims.push_back(GridDim::fixed("lambda", lambda));
  for (int i = 0; i < eta.size(); ++i) {
    spec.dims.push_back(GridDim::fixed("eta" + std::to_string(i + 1), eta(i)));
  }
  return spec;
}

// lambda x eta1 plane spanning the truth and a strong violation.
GridSpec plane_grid(double alpha) {
  GridSpec spec;
  spec.alpha = alpha;
  spec.dims.push_back(GridDim::range("lambda", 0.55, 0.85, 3));
  spec.dims.push_back(GridDim::range("eta1", 1.5, 12.0, 3));
  spec.dims.push_back(GridDim::fixed("eta2", 2.0));
  spec.dims.push_back(GridDim::fixed("eta3", 2.0));
  spec.dims.push_back(GridDim::fixed("eta4", 1.0));
  return spec;
}

// Minimal model with a two-coordinate theta for the failure-path tests:
// one scalar moment per observation, a single always-slack constraint, and
// an evaluation that blows up past a threshold in theta(0).
struct StubModel : MomentModel {
  Eigen::VectorXd vals;
  double blow_up_above = 0.75;

  explicit StubModel(Eigen::VectorXd v) : vals(std::move(v)) {}

  int num_obs() const override { return static_cast<int>(vals.size()); }
  int dim_m() const override { return 1; }
  int dim_n() const override { return 0; }

  void check(const Eigen::VectorXd& theta) const {
    if (theta.size() != 2) throw ShapeMismatch("stub theta must have size 2");
  }
  Eigen::MatrixXd mat_b(const Eigen::VectorXd& theta) const override {
    check(theta);
    return Eigen::MatrixXd::Constant(1, 1, 1.0);
  }
  Eigen::MatrixXd mat_c(const Eigen::VectorXd& theta) const override {
    check(theta);
    return Eigen::MatrixXd(1, 0);
  }
  Eigen::VectorXd vec_rho(const Eigen::VectorXd& theta) const override {
    check(theta);
    return Eigen::VectorXd::Constant(1, 10.0);
  }
  Eigen::VectorXd moment_m(int i, const Eigen::VectorXd& theta) const override {
    check(theta);
    if (theta(0) > blow_up_above) {
      throw EvaluationFailure("stub moment blew up");
    }
    return vals.segment(i, 1);
  }
  Eigen::VectorXd moment_n(int, const Eigen::VectorXd& theta,
                           const Eigen::VectorXd&) const override {
    check(theta);
    return Eigen::VectorXd(0);
  }
};

FirstStageEstimate stub_first_stage(int n) {
  FirstStageEstimate fs;
  fs.converged = true;
  fs.delta_hat = Eigen::VectorXd::Zero(1);
  fs.influence.assign(static_cast<std::size_t>(n), Eigen::VectorXd::Zero(1));
  return fs;
}

}  // namespace

TEST_CASE("GridDim: endpoints are hit exactly") {
  const GridDim d = GridDim::range("x", 0.0, 1.0, 5);
  CHECK(d.value_at(0) == 0.0);
  CHECK(d.value_at(4) == 1.0);
  CHECK(d.value_at(2) == doctest::Approx(0.5).epsilon(1e-15));

  const GridDim f = GridDim::fixed("y", 0.7);
  CHECK(f.count == 1);
  CHECK(f.value_at(0) == 0.7);
  CHECK_THROWS_AS(f.value_at(1), ShapeMismatch);
  CHECK_THROWS_AS(d.value_at(-1), ShapeMismatch);
}

TEST_CASE("GridSpec: row-major flattening, last dimension fastest") {
  GridSpec spec;
  spec.dims.push_back(GridDim::range("a", 0.6, 0.7, 2));
  spec.dims.push_back(GridDim::range("b", 1.0, 3.0, 3));
  spec.dims.push_back(GridDim::fixed("c", 5.0));
  spec.validate();
  CHECK(spec.total_points() == 6);

  const Eigen::VectorXd p0 = spec.point_at(0);
  CHECK(p0(0) == 0.6);
  CHECK(p0(1) == 1.0);
  CHECK(p0(2) == 5.0);
  CHECK(spec.point_at(1)(1) == 2.0);   // b advances first
  CHECK(spec.point_at(3)(0) == 0.7);   // then a
  CHECK(spec.point_at(3)(1) == 1.0);
  CHECK(spec.point_at(5)(1) == 3.0);
  CHECK_THROWS_AS(spec.point_at(6), ShapeMismatch);
}

TEST_CASE("GridSpec: validation rejects malformed specs") {
  auto base = [] {
    GridSpec s;
    s.dims.push_back(GridDim::range("a", 0.0, 1.0, 3));
    s.dims.push_back(GridDim::fixed("b", 2.0));
    return s;
  };

  GridSpec empty;
  CHECK_THROWS_AS(empty.validate(), ConfigInvalid);

  GridSpec alpha_lo = base();
  alpha_lo.alpha = 0.0;
  CHECK_THROWS_AS(alpha_lo.validate(), ConfigInvalid);
  GridSpec alpha_hi = base();
  alpha_hi.alpha = 1.0;
  CHECK_THROWS_AS(alpha_hi.validate(), ConfigInvalid);

  GridSpec dup = base();
  dup.dims.push_back(GridDim::fixed("a", 0.5));
  CHECK_THROWS_AS(dup.validate(), ConfigInvalid);

  GridSpec zero_count = base();
  zero_count.dims[0].count = 0;
  CHECK_THROWS_AS(zero_count.validate(), ConfigInvalid);

  GridSpec flipped = base();
  flipped.dims[0].lo = 2.0;
  CHECK_THROWS_AS(flipped.validate(), ConfigInvalid);

  GridSpec loose_point = base();
  loose_point.dims[1].hi = 3.0;  // count == 1 but lo != hi
  CHECK_THROWS_AS(loose_point.validate(), ConfigInvalid);

  GridSpec repeated = base();
  repeated.dims[0].hi = repeated.dims[0].lo;  // count > 1 on a single spot
  CHECK_THROWS_AS(repeated.validate(), ConfigInvalid);

  GridSpec huge = base();
  huge.dims[0].count = 4000;
  huge.dims.push_back(GridDim::range("c", 0.0, 1.0, 3000));
  CHECK_THROWS_AS(huge.validate(), ConfigInvalid);
}

TEST_CASE("invert_test: the generating truth is accepted") {
  const Pipeline& p = pipeline();
  const GridSpec spec =
      point_grid(p.truth.theta_true.lambda, p.truth.theta_true.eta, 0.05);
  const ConfidenceGrid grid = invert_test(spec, *p.model, p.fs);
  REQUIRE(grid.points.size() == 1);
  CHECK(grid.points[0].decided);
  CHECK(grid.points[0].accepted());
  CHECK(grid.points[0].rcc.T <= 1e-6);
  CHECK(grid.num_accepted() == 1);
  CHECK(grid.num_undecided() == 0);
  CHECK_FALSE(grid.truncated);
}

TEST_CASE("invert_test: an implausibly large sunk cost is rejected") {
  const Pipeline& p = pipeline();
  Eigen::VectorXd eta = p.truth.theta_true.eta;
  eta(0) = 12.0;
  const GridSpec spec = point_grid(p.truth.theta_true.lambda, eta, 0.05);
  const ConfidenceGrid grid = invert_test(spec, *p.model, p.fs);
  REQUIRE(grid.points.size() == 1);
  CHECK(grid.points[0].decided);
  CHECK(grid.points[0].rcc.reject);
  CHECK(grid.num_accepted() == 0);
}

TEST_CASE("invert_test: acceptance regions nest in alpha") {
  const Pipeline& p = pipeline();
  const ConfidenceGrid tight = invert_test(plane_grid(0.05), *p.model, p.fs);
  const ConfidenceGrid loose = invert_test(plane_grid(0.10), *p.model, p.fs);
  REQUIRE(tight.points.size() == loose.points.size());
  bool any_accept = false;
  bool any_reject = false;
  for (std::size_t i = 0; i < tight.points.size(); ++i) {
    REQUIRE(tight.points[i].decided);
    REQUIRE(loose.points[i].decided);
    // Same statistic, smaller critical value at the larger level.
    CHECK(tight.points[i].rcc.T ==
          doctest::Approx(loose.points[i].rcc.T).epsilon(1e-12));
    if (loose.points[i].accepted()) CHECK(tight.points[i].accepted());
    any_accept = any_accept || tight.points[i].accepted();
    any_reject = any_reject || loose.points[i].rcc.reject;
  }
  CHECK(any_accept);
  CHECK(any_reject);
  CHECK(loose.num_accepted() <= tight.num_accepted());
}

TEST_CASE("invert_test: upfront validation throws instead of sweeping") {
  const Pipeline& p = pipeline();
  const GridSpec spec =
      point_grid(p.truth.theta_true.lambda, p.truth.theta_true.eta, 0.05);

  FirstStageEstimate stale = p.fs;
  stale.converged = false;
  CHECK_THROWS_AS(invert_test(spec, *p.model, stale), ConfigInvalid);

  FirstStageEstimate short_psi = p.fs;
  short_psi.influence.pop_back();
  CHECK_THROWS_AS(invert_test(spec, *p.model, short_psi), ShapeMismatch);

  GridSpec wrong_dim;
  wrong_dim.dims.push_back(GridDim::fixed("lambda", 0.7));
  CHECK_THROWS_AS(invert_test(wrong_dim, *p.model, p.fs), ShapeMismatch);
}

TEST_CASE("invert_test: per-point failures are kept as undecided") {
  Eigen::VectorXd vals(5);
  vals << 1.0, 2.0, 1.5, 0.5, 1.2;
  const StubModel model(vals);
  const FirstStageEstimate fs = stub_first_stage(model.num_obs());

  GridSpec spec;
  spec.dims.push_back(GridDim::range("t1", 0.0, 1.0, 3));
  spec.dims.push_back(GridDim::fixed("t2", 0.0));
  spec.validate();

  const ConfidenceGrid grid = invert_test(spec, model, fs);
  REQUIRE(grid.points.size() == 3);
  CHECK(grid.points[0].decided);
  CHECK(grid.points[0].accepted());
  CHECK(grid.points[1].decided);
  CHECK_FALSE(grid.points[2].decided);           // theta(0) = 1 blows up
  CHECK_FALSE(grid.points[2].accepted());        // undecided never accepted
  CHECK(grid.points[2].failure.find("blew up") != std::string::npos);
  CHECK(grid.num_undecided() == 1);
  CHECK(grid.num_accepted() == 2);
  CHECK_FALSE(grid.truncated);

  // The undecided point is written with sentinel statistics.
  const stdfs::path csv = tmpdir() / "stub_slice.csv";
  export_slices(grid, {}, csv.string());
  const std::string text = slurp(csv);
  CHECK(text.find("1,0,0,nan,-1,nan,nan") != std::string::npos);
}

TEST_CASE("invert_test: worker count changes nothing") {
  const Pipeline& p = pipeline();
  const GridSpec spec = plane_grid(0.05);

  InvertOptions seq;
  seq.workers = 1;
  seq.seed = 7;
  seq.dataset_id = "fixture";
  InvertOptions par = seq;
  par.workers = 4;

  const ConfidenceGrid a = invert_test(spec, *p.model, p.fs, seq);
  const ConfidenceGrid b = invert_test(spec, *p.model, p.fs, par);

  const stdfs::path dir = tmpdir();
  write_grid_json(a, (dir / "grid_seq.json").string(), {{"config_hash", "x"}});
  write_grid_json(b, (dir / "grid_par.json").string(), {{"config_hash", "x"}});
  const std::vector<std::pair<std::string, double>> pins = {
      {"eta2", 2.0}, {"eta3", 2.0}, {"eta4", 1.0}};
  export_slices(a, pins, (dir / "slice_seq.csv").string());
  export_slices(b, pins, (dir / "slice_par.csv").string());

  CHECK(slurp(dir / "grid_seq.json") == slurp(dir / "grid_par.json"));
  CHECK(slurp(dir / "slice_seq.csv") == slurp(dir / "slice_par.csv"));
}

TEST_CASE("export_slices: layout, metadata, and pin validation") {
  const Pipeline& p = pipeline();
  const ConfidenceGrid grid = invert_test(plane_grid(0.05), *p.model, p.fs);
  const std::vector<std::pair<std::string, double>> pins = {
      {"eta2", 2.0}, {"eta3", 2.0}, {"eta4", 1.0}};
  const stdfs::path csv = tmpdir() / "plane.csv";
  export_slices(grid, pins, csv.string(), {"note: fixture"});
  const std::string text = slurp(csv);

  std::vector<std::string> lines;
  std::stringstream ss(text);
  for (std::string line; std::getline(ss, line);) lines.push_back(line);

  std::size_t header = 0;
  while (header < lines.size() && lines[header].rfind("#", 0) == 0) ++header;
  REQUIRE(header < lines.size());
  CHECK(lines[header] == "lambda,eta1,accepted,T,r_hat,beta,critical");
  CHECK(text.find("# note: fixture") != std::string::npos);
  REQUIRE(lines.size() == header + 1 + 9);

  // Rows run row-major over (lambda, eta1) and echo the flat grid order.
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      const std::string& row =
          lines[header + 1 + static_cast<std::size_t>(a * 3 + b)];
      std::stringstream rs(row);
      std::string cell;
      std::getline(rs, cell, ',');
      CHECK(std::stod(cell) ==
            doctest::Approx(grid.spec.dims[0].value_at(a)).epsilon(1e-15));
      std::getline(rs, cell, ',');
      CHECK(std::stod(cell) ==
            doctest::Approx(grid.spec.dims[1].value_at(b)).epsilon(1e-15));
      std::getline(rs, cell, ',');
      const std::size_t flat = static_cast<std::size_t>(a * 3 + b);
      CHECK(std::stoi(cell) == (grid.points[flat].accepted() ? 1 : 0));
    }
  }

  CHECK_THROWS_AS(export_slices(grid, {{"bogus", 1.0}}, csv.string()),
                  SliceNotOnGrid);
  CHECK_THROWS_AS(export_slices(grid, {{"eta2", 99.0}}, csv.string()),
                  SliceNotOnGrid);
  CHECK_THROWS_AS(
      export_slices(grid, {{"eta2", 2.0}, {"eta2", 2.0}}, csv.string()),
      SliceNotOnGrid);
  const std::vector<std::pair<std::string, double>> over = {
      {"eta1", 1.5}, {"eta2", 2.0}, {"eta3", 2.0}, {"eta4", 1.0}};
  CHECK_THROWS_AS(export_slices(grid, over, csv.string()), SliceNotOnGrid);
  CHECK_THROWS_AS(export_slices(grid, {}, csv.string()), SliceNotOnGrid);
  CHECK_THROWS_AS(
      export_slices(grid, pins, "/nonexistent_dir_zz/slice.csv"),
      IoFailure);
}

TEST_CASE("write_grid_json: stable schema and metadata passthrough") {
  const Pipeline& p = pipeline();
  const GridSpec spec =
      point_grid(p.truth.theta_true.lambda, p.truth.theta_true.eta, 0.05);
  InvertOptions opt;
  opt.seed = 42;
  opt.dataset_id = "demand:abc";
  const ConfidenceGrid grid = invert_test(spec, *p.model, p.fs, opt);

  const stdfs::path j1 = tmpdir() / "grid_a.json";
  const stdfs::path j2 = tmpdir() / "grid_b.json";
  write_grid_json(grid, j1.string(), {{"config_hash", "deadbeef"}});
  write_grid_json(grid, j2.string(), {{"config_hash", "deadbeef"}});
  const std::string a = slurp(j1);
  CHECK(a == slurp(j2));
  CHECK(a.find("\"schema\": 1") != std::string::npos);
  CHECK(a.find("\"config_hash\": \"deadbeef\"") != std::string::npos);
  CHECK(a.find("\"dataset_id\": \"demand:abc\"") != std::string::npos);
  CHECK(a.find("\"seed\": 42") != std::string::npos);
  CHECK(a.find("\"delta_fingerprint\"") != std::string::npos);

  CHECK_THROWS_AS(write_grid_json(grid, "/nonexistent_dir_zz/grid.json"),
                  IoFailure);
}
