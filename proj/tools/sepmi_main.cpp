// sepmi: two-stage inference on separable moment-inequality models.
//
// Subcommands wire the library end to end: synthetic data generation,
// first-stage demand estimation, the refined chi-squared test at a point,
// test inversion over a parameter grid, the polyhedral-elimination baseline,
// and the Monte Carlo size/coverage studies.
//
// Exit codes: 0 ok, 2 config/schema, 3 I/O, 4 non-convergence, 5 internal.
// Every file written by a seeded subcommand is byte-reproducible: outputs
// carry the tool version, the seed, and a hash of the statistical options,
// and never wall-clock data (runtimes go to the console only).

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Dense>

#include <chrono>
#include <csignal>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sepmi/confset.hpp"
#include "sepmi/demand.hpp"
#include "sepmi/errors.hpp"
#include "sepmi/hash.hpp"
#include "sepmi/io.hpp"
#include "sepmi/market.hpp"
#include "sepmi/mc.hpp"
#include "sepmi/parallel.hpp"
#include "sepmi/polyhedra.hpp"
#include "sepmi/qp.hpp"
#include "sepmi/rcc.hpp"
#include "sepmi/rng.hpp"
#include "sepmi/two_stage.hpp"
#include "sepmi/version.hpp"

namespace {

using nlohmann::json;
using namespace sepmi;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_vec(const Eigen::VectorXd& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i > 0) out += ',';
    out += fmt17(v(i));
  }
  return out;
}

Eigen::VectorXd parse_vector(const std::string& text, const std::string& flag) {
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (end == cell.c_str() || *end != '\0' || !std::isfinite(v)) {
      throw ConfigInvalid(flag + ": bad number '" + cell + "'");
    }
    vals.push_back(v);
  }
  if (vals.empty()) throw ConfigInvalid(flag + ": empty list");
  return Eigen::Map<Eigen::VectorXd>(vals.data(),
                                     static_cast<Eigen::Index>(vals.size()));
}

// "value" pins the dimension; "lo:hi:count" spans it.
GridDim parse_grid_dim(const std::string& label, const std::string& text,
                       const std::string& flag) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ':')) parts.push_back(cell);
  const auto num = [&](const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0' || !std::isfinite(v)) {
      throw ConfigInvalid(flag + ": bad number '" + s + "'");
    }
    return v;
  };
  if (parts.size() == 1) return GridDim::fixed(label, num(parts[0]));
  if (parts.size() == 3) {
    char* end = nullptr;
    const long n = std::strtol(parts[2].c_str(), &end, 10);
    if (end == parts[2].c_str() || *end != '\0' || n < 1) {
      throw ConfigInvalid(flag + ": bad count '" + parts[2] + "'");
    }
    return GridDim::range(label, num(parts[0]), num(parts[1]),
                          static_cast<int>(n));
  }
  throw ConfigInvalid(flag + ": expected 'value' or 'lo:hi:count', got '" +
                      text + "'");
}

std::string file_fingerprint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return hex64(fnv1a(ss.str()));
}

using OptionList = std::vector<std::pair<std::string, std::string>>;

// Hash of the statistical identity of a run: option values only, never
// output paths, worker counts, or anything else that cannot change results.
std::string hash_options(const OptionList& opts) {
  std::string joined;
  for (const auto& [k, v] : opts) {
    joined += k;
    joined += '=';
    joined += v;
    joined += ';';
  }
  return hex64(fnv1a(joined));
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoFailure("cannot create directory: " + dir);
}

void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open for writing: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw IoFailure("write failed: " + path);
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// ---------------------------------------------------------------------------
// Shared option bundles

struct DgpFlags {
  DgpConfig cfg;
  std::string beta_text, eta_text;

  void attach(CLI::App* cmd) {
    cmd->add_option("--products", cfg.num_products, "product type count J");
    cmd->add_option("--periods", cfg.num_periods, "panel length T");
    cmd->add_option("--firms", cfg.num_firms, "firm count F");
    cmd->add_option("--draws", cfg.draws, "heterogeneity draws R");
    cmd->add_option("--sigma-beta", cfg.sigma_beta,
                    "taste heterogeneity scale (all characteristics)");
    cmd->add_option("--sigma-alpha", cfg.sigma_alpha,
                    "price-coefficient heterogeneity scale");
    cmd->add_option("--beta-true", beta_text,
                    "true taste coefficients, comma-separated");
    cmd->add_option("--alpha-true", cfg.alpha_true, "true price coefficient");
    cmd->add_option("--lambda-true", cfg.lambda_true,
                    "true salvage fraction, in [0,1]");
    cmd->add_option("--eta-true", eta_text,
                    "true sunk-cost coefficients, comma-separated");
    cmd->add_option("--xi-sd", cfg.xi_sd, "structural residual sd");
    cmd->add_option("--initial-offer-prob", cfg.initial_offer_prob,
                    "first-period offering probability");
    cmd->add_option("--move-prob", cfg.move_prob,
                    "per firm-period move proposal probability");
    cmd->add_option("--slack-lo", cfg.slack_lo, "profit screen slack, lower");
    cmd->add_option("--slack-hi", cfg.slack_hi, "profit screen slack, upper");
    cmd->add_option("--market-size-lo", cfg.market_size_lo,
                    "market size band, lower");
    cmd->add_option("--market-size-hi", cfg.market_size_hi,
                    "market size band, upper");
  }

  DgpConfig resolve() const {
    DgpConfig c = cfg;
    if (!beta_text.empty()) c.beta_true = parse_vector(beta_text, "--beta-true");
    if (!eta_text.empty()) c.eta_true = parse_vector(eta_text, "--eta-true");
    return c;
  }

  // Canonical option echo used both for the config hash and for JSON dumps;
  // unset vectors render as the documented defaults once resolve() ran.
  static OptionList echo(const DgpConfig& c) {
    return {
        {"products", std::to_string(c.num_products)},
        {"periods", std::to_string(c.num_periods)},
        {"firms", std::to_string(c.num_firms)},
        {"draws", std::to_string(c.draws)},
        {"sigma_beta", fmt17(c.sigma_beta)},
        {"sigma_alpha", fmt17(c.sigma_alpha)},
        {"beta_true", c.beta_true.size() ? fmt_vec(c.beta_true) : "default"},
        {"alpha_true", fmt17(c.alpha_true)},
        {"lambda_true", fmt17(c.lambda_true)},
        {"eta_true", c.eta_true.size() ? fmt_vec(c.eta_true) : "default"},
        {"xi_sd", fmt17(c.xi_sd)},
        {"initial_offer_prob", fmt17(c.initial_offer_prob)},
        {"move_prob", fmt17(c.move_prob)},
        {"slack_lo", fmt17(c.slack_lo)},
        {"slack_hi", fmt17(c.slack_hi)},
        {"market_size_lo", fmt17(c.market_size_lo)},
        {"market_size_hi", fmt17(c.market_size_hi)},
    };
  }
};

struct FsFlags {
  EstimateOptions opt;
  int draws = 1;
  double sigma_beta = 0.0;
  double sigma_alpha = 0.0;
  std::uint64_t draw_seed = 42;

  void attach(CLI::App* cmd) {
    cmd->add_option("--draws", draws, "heterogeneity draws R");
    cmd->add_option("--sigma-beta", sigma_beta,
                    "taste heterogeneity scale (all characteristics)");
    cmd->add_option("--sigma-alpha", sigma_alpha,
                    "price-coefficient heterogeneity scale");
    cmd->add_option("--draw-seed", draw_seed,
                    "draw seed; match the dataset's generating seed");
    cmd->add_option("--tol", opt.tol, "BFGS gradient tolerance");
    cmd->add_option("--max-iter", opt.max_iter, "BFGS iteration cap");
    cmd->add_option("--contraction-tol", opt.contraction_tol,
                    "share-inversion tolerance");
    cmd->add_option("--contraction-max-iter", opt.contraction_max_iter,
                    "share-inversion iteration cap");
    cmd->add_option("--gradient-step", opt.gradient_step,
                    "objective gradient step");
  }

  Draws make_draws(int dim_x) const {
    if (draws < 1) throw ConfigInvalid("--draws: must be >= 1");
    return Draws::make(draws, Eigen::VectorXd::Constant(dim_x, sigma_beta),
                       sigma_alpha, draw_seed);
  }

  OptionList echo() const {
    return {
        {"draws", std::to_string(draws)},
        {"sigma_beta", fmt17(sigma_beta)},
        {"sigma_alpha", fmt17(sigma_alpha)},
        {"draw_seed", std::to_string(draw_seed)},
        {"tol", fmt17(opt.tol)},
        {"max_iter", std::to_string(opt.max_iter)},
        {"contraction_tol", fmt17(opt.contraction_tol)},
        {"contraction_max_iter", std::to_string(opt.contraction_max_iter)},
        {"gradient_step", fmt17(opt.gradient_step)},
    };
  }
};

// Demand + events + recomputed first stage, with influence values remapped
// to event rows. The optional first-stage file is a cross-check only: the
// full influence stack never round-trips through JSON.
struct LoadedDataset {
  DemandData demand;
  std::vector<VehicleEvent> events;
  Draws draws;
  MarketDataset data;
  FirstStageEstimate fs;         // observation-aligned influence
  FirstStageEstimate fs_events;  // event-aligned influence
  std::string demand_fp, events_fp;
};

LoadedDataset load_pipeline(const std::string& demand_path,
                            const std::string& events_path,
                            const FsFlags& fs_flags,
                            const std::string& first_stage_path) {
  LoadedDataset L;
  L.demand_fp = file_fingerprint(demand_path);
  L.events_fp = file_fingerprint(events_path);
  L.demand = read_demand_csv(demand_path);
  L.events = read_events_csv(events_path);
  L.draws = fs_flags.make_draws(L.demand.dim_x());

  EstimateOptions opt = fs_flags.opt;
  opt.with_influence = true;
  const Eigen::VectorXd init = Eigen::VectorXd::Zero(L.demand.dim_x() + 1);
  L.fs = estimate_demand(L.demand, L.draws, Eigen::MatrixXd(), init, opt);
  if (!L.fs.converged) {
    throw NoConvergence("first stage did not converge; loosen --tol or raise --max-iter");
  }

  if (!first_stage_path.empty()) {
    const FirstStageFile file = read_first_stage_json(first_stage_path);
    if (file.delta_hat.size() != L.fs.delta_hat.size()) {
      throw ConfigInvalid("--first-stage: delta dimension mismatch");
    }
    const double scale = std::max(1.0, L.fs.delta_hat.cwiseAbs().maxCoeff());
    const double diff =
        (file.delta_hat - L.fs.delta_hat).cwiseAbs().maxCoeff() / scale;
    if (diff > 1e-6) {
      throw ConfigInvalid(
          "--first-stage: stored estimate disagrees with the recomputed one "
          "(relative gap " + fmt17(diff) + "); check draws and tolerances");
    }
  }

  L.data = make_market_dataset(L.demand, L.events, L.draws);
  L.fs_events = L.fs;
  L.fs_events.influence = event_influence(L.data, L.demand, L.fs.influence);
  return L;
}

RccResult decide_at(const LoadedDataset& L, const VehicleMarketModel& model,
                    const Eigen::VectorXd& theta, double alpha,
                    double jacobian_step, QpSolution* qp_out = nullptr) {
  const Eigen::MatrixXd A = constraint_matrix(model, theta);
  const Eigen::VectorXd rho = model.vec_rho(theta);
  const Eigen::VectorXd pbar =
      moment_pbar(model, theta, L.fs_events.delta_hat);
  const Eigen::MatrixXd P =
      jacobian_p_delta(model, theta, L.fs_events.delta_hat, jacobian_step);
  SpdMatrix Sigma = corrected_covariance(model, theta, L.fs_events, P);
  const double n = static_cast<double>(model.num_obs());
  QpProblem problem(pbar, std::move(Sigma), A, rho, n);
  const QpSolution qp = solve_projection(problem);
  if (qp_out) *qp_out = qp;
  return rcc_decide(qp, A, rho, problem.Sigma, n, alpha);
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  DgpFlags dgp;
  std::string out_dir = ".";
  std::uint64_t seed = 42;
};

int cmd_simulate(const SimulateArgs& a) {
  const DgpConfig cfg = a.dgp.resolve();
  const SynthResult truth = synth_dgp(cfg, a.seed);

  OptionList opts = DgpFlags::echo(cfg);
  opts.emplace_back("seed", std::to_string(a.seed));
  const std::string hash = hash_options(opts);
  const MetaLines meta = {{"seed", std::to_string(a.seed)},
                          {"config_hash", hash}};

  ensure_dir(a.out_dir);
  write_demand_csv(truth.demand, a.out_dir + "/demand.csv", meta);
  write_events_csv(truth.events, a.out_dir + "/events.csv", meta);
  write_truth_json(truth, cfg, a.out_dir + "/truth.json", meta);

  int entries = 0;
  for (const auto& e : truth.events) entries += e.kind == EventKind::Entry;
  std::printf("seed %llu, config %s\n",
              static_cast<unsigned long long>(a.seed), hash.c_str());
  std::printf("demand panel: %d rows, %zu markets, %zu product types\n",
              truth.demand.total_obs(), truth.demand.markets.size(),
              truth.types.size());
  std::printf("events: %zu (%d entries, %zu exits)\n", truth.events.size(),
              entries, truth.events.size() - static_cast<std::size_t>(entries));
  std::printf("wrote %s/{demand.csv,events.csv,truth.json}\n",
              a.out_dir.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// first-stage

struct FirstStageArgs {
  FsFlags fs;
  std::string demand_path;
  std::string out_path = "first_stage.json";
};

int cmd_first_stage(const FirstStageArgs& a) {
  const std::string demand_fp = file_fingerprint(a.demand_path);
  DemandData data = read_demand_csv(a.demand_path);
  const Draws draws = a.fs.make_draws(data.dim_x());
  EstimateOptions opt = a.fs.opt;
  opt.with_influence = true;
  const Eigen::VectorXd init = Eigen::VectorXd::Zero(data.dim_x() + 1);
  const FirstStageEstimate fs =
      estimate_demand(data, draws, Eigen::MatrixXd(), init, opt);

  OptionList opts = a.fs.echo();
  opts.emplace_back("demand", demand_fp);
  const std::string hash = hash_options(opts);
  const MetaLines meta = {{"seed", std::to_string(a.fs.draw_seed)},
                          {"config_hash", hash},
                          {"demand_fingerprint", demand_fp}};
  write_first_stage_json(fs, a.out_path, meta);

  std::printf("delta_hat = (%s)\n", fmt_vec(fs.delta_hat).c_str());
  std::printf("objective = %.12g, gradient norm = %.12g\n", fs.objective_value,
              fs.grad_norm);
  std::printf("converged = %s after %d iterations\n",
              fs.converged ? "true" : "false", fs.iterations);
  std::printf("wrote %s\n", a.out_path.c_str());
  return fs.converged ? 0 : 4;
}

// ---------------------------------------------------------------------------
// rcc-test

struct RccTestArgs {
  FsFlags fs;
  std::string demand_path, events_path, first_stage_path;
  std::string theta_text;
  double alpha = 0.05;
  double jacobian_step = 1e-5;
};

int cmd_rcc_test(const RccTestArgs& a) {
  const Eigen::VectorXd theta = parse_vector(a.theta_text, "--theta");
  if (!(a.alpha > 0.0 && a.alpha < 1.0)) {
    throw ConfigInvalid("--alpha: must lie in (0, 1)");
  }
  const LoadedDataset L =
      load_pipeline(a.demand_path, a.events_path, a.fs, a.first_stage_path);
  const VehicleMarketModel model(L.data);
  if (theta.size() != 1 + L.demand.dim_x()) {
    throw ConfigInvalid("--theta: expected lambda followed by " +
                        std::to_string(L.demand.dim_x()) +
                        " sunk-cost coefficients");
  }
  if (!(theta(0) >= 0.0 && theta(0) <= 1.0)) {
    throw ConfigInvalid("--theta: lambda must lie in [0, 1]");
  }

  QpSolution qp;
  const RccResult r = decide_at(L, model, theta, a.alpha, a.jacobian_step, &qp);

  std::printf("theta = (%s), n = %d events\n", fmt_vec(theta).c_str(),
              model.num_obs());
  std::printf("T = %.12g\n", r.T);
  std::string act;
  for (std::size_t i = 0; i < r.active_rows.size(); ++i) {
    if (i > 0) act += ',';
    act += std::to_string(r.active_rows[i]);
  }
  std::printf("active rows = [%s], r_hat = %d\n", act.c_str(), r.r_hat);
  std::printf("beta = %.12g, critical = %.12g\n", r.beta, r.critical);
  std::printf("decision: %s H0 at alpha = %g\n",
              r.reject ? "reject" : "accept", a.alpha);
  return 0;  // rejection is a result, not an error
}

// ---------------------------------------------------------------------------
// confset

struct ConfsetArgs {
  FsFlags fs;
  std::string demand_path, events_path, first_stage_path;
  std::string out_dir = ".";
  std::string grid_lambda, grid_eta1, grid_eta2, grid_eta3, grid_eta4;
  std::vector<std::string> slices;
  double alpha = 0.05;
  double jacobian_step = 1e-5;
  std::uint64_t seed = 42;
  int workers = 0;
};

int cmd_confset(const ConfsetArgs& a) {
  GridSpec spec;
  spec.alpha = a.alpha;
  spec.dims = {
      parse_grid_dim("lambda", a.grid_lambda, "--grid-lambda"),
      parse_grid_dim("eta1", a.grid_eta1, "--grid-eta1"),
      parse_grid_dim("eta2", a.grid_eta2, "--grid-eta2"),
      parse_grid_dim("eta3", a.grid_eta3, "--grid-eta3"),
      parse_grid_dim("eta4", a.grid_eta4, "--grid-eta4"),
  };
  if (!(spec.dims[0].lo >= 0.0 && spec.dims[0].hi <= 1.0)) {
    throw ConfigInvalid("--grid-lambda: lambda must lie in [0, 1]");
  }
  spec.validate();

  // Slice pins: explicit --slice name=value flags, else pin every fixed
  // dimension automatically when exactly two dimensions are free.
  std::vector<std::pair<std::string, double>> fixed;
  for (const std::string& s : a.slices) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == s.size()) {
      throw ConfigInvalid("--slice: expected name=value, got '" + s + "'");
    }
    const std::string name = s.substr(0, eq);
    char* end = nullptr;
    const std::string val = s.substr(eq + 1);
    const double v = std::strtod(val.c_str(), &end);
    if (end == val.c_str() || *end != '\0' || !std::isfinite(v)) {
      throw ConfigInvalid("--slice: bad number '" + val + "'");
    }
    fixed.emplace_back(name, v);
  }
  int free_dims = 0;
  if (fixed.empty()) {
    for (const GridDim& d : spec.dims) {
      if (d.count > 1) {
        ++free_dims;
      } else {
        fixed.emplace_back(d.label, d.lo);
      }
    }
    if (free_dims != 2) fixed.clear();  // no natural 2-D slice
  }

  const LoadedDataset L =
      load_pipeline(a.demand_path, a.events_path, a.fs, a.first_stage_path);
  const VehicleMarketModel model(L.data);

  InvertOptions opt;
  opt.workers = a.workers;
  opt.jacobian_step = a.jacobian_step;
  opt.seed = a.seed;
  opt.dataset_id = L.demand_fp;

  const auto t0 = std::chrono::steady_clock::now();
  const ConfidenceGrid grid = invert_test(spec, model, L.fs_events, opt);
  const double elapsed = seconds_since(t0);

  OptionList opts = a.fs.echo();
  opts.emplace_back("demand", L.demand_fp);
  opts.emplace_back("events", L.events_fp);
  for (const GridDim& d : spec.dims) {
    opts.emplace_back("grid_" + d.label, fmt17(d.lo) + ":" + fmt17(d.hi) +
                                             ":" + std::to_string(d.count));
  }
  opts.emplace_back("alpha", fmt17(a.alpha));
  opts.emplace_back("jacobian_step", fmt17(a.jacobian_step));
  opts.emplace_back("seed", std::to_string(a.seed));
  const std::string hash = hash_options(opts);

  ensure_dir(a.out_dir);
  write_grid_json(grid, a.out_dir + "/grid.json",
                  {{"config_hash", hash}, {"events_fingerprint", L.events_fp}});
  std::printf("grid: %lld points, %lld accepted, %lld undecided%s\n",
              static_cast<long long>(grid.points.size()),
              static_cast<long long>(grid.num_accepted()),
              static_cast<long long>(grid.num_undecided()),
              grid.truncated ? " [truncated]" : "");
  std::printf("wrote %s/grid.json\n", a.out_dir.c_str());

  if (!fixed.empty()) {
    export_slices(grid, fixed, a.out_dir + "/slice.csv",
                  {"config_hash: " + hash});
    std::printf("wrote %s/slice.csv\n", a.out_dir.c_str());
  } else if (a.slices.empty()) {
    std::printf(
        "slice.csv skipped: %d free dimensions; pass --slice name=value to "
        "pin all but two\n",
        free_dims);
  }
  std::printf("inversion took %.2fs\n", elapsed);
  return 0;
}

// ---------------------------------------------------------------------------
// eliminate

struct EliminateArgs {
  std::string b_path, c_path, d_path;
  std::string out_dir = ".";
  int cap = 15;
};

int cmd_eliminate(const EliminateArgs& a) {
  const std::string b_fp = file_fingerprint(a.b_path);
  const std::string c_fp = file_fingerprint(a.c_path);
  const std::string d_fp = file_fingerprint(a.d_path);
  const Eigen::MatrixXd B = read_matrix_csv(a.b_path);
  const Eigen::MatrixXd C = read_matrix_csv(a.c_path);
  const Eigen::MatrixXd D = read_matrix_csv(a.d_path);
  Eigen::VectorXd d;
  if (D.cols() == 1) {
    d = D.col(0);
  } else if (D.rows() == 1) {
    d = D.row(0).transpose();
  } else {
    throw SchemaInvalid(a.d_path + ": d must be a single row or column");
  }

  const EliminationResult res = eliminate_nuisance(B, C, d, a.cap);

  const std::string hash = hash_options({{"b", b_fp},
                                         {"c", c_fp},
                                         {"d", d_fp},
                                         {"cap", std::to_string(a.cap)}});
  const MetaLines meta = {{"config_hash", hash},
                          {"b_fingerprint", b_fp},
                          {"c_fingerprint", c_fp},
                          {"d_fingerprint", d_fp}};
  ensure_dir(a.out_dir);
  write_matrix_csv(res.A, a.out_dir + "/A.csv", meta);
  write_matrix_csv(Eigen::MatrixXd(res.b), a.out_dir + "/b.csv", meta);

  std::printf(
      "eliminated %lld nuisance dimensions: %lld vertices -> A is %lld x "
      "%lld\n",
      static_cast<long long>(C.cols()), static_cast<long long>(res.H.rows()),
      static_cast<long long>(res.A.rows()), static_cast<long long>(res.A.cols()));
  std::printf("wrote %s/{A.csv,b.csv}\n", a.out_dir.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// size-study

struct SizeStudyArgs {
  std::string kind = "boundary";
  int dim = 2;
  double gap = 10.0;
  std::uint64_t design_seed = 0;
  double n = 100.0;
  int reps = 10000;
  double alpha = 0.05;
  std::uint64_t seed = 42;
  int workers = 0;
  std::string out_path = "size_study.json";
};

SizeStudyDesign make_size_design(const SizeStudyArgs& a) {
  if (a.dim < 1 || a.dim > 50) {
    throw ConfigInvalid("--dim: must lie in [1, 50]");
  }
  if (!(a.gap > 0.0)) throw ConfigInvalid("--gap: must be > 0");
  SizeStudyDesign d;
  d.n = a.n;
  d.reps = a.reps;
  d.alpha = a.alpha;
  d.seed = a.seed;
  d.A = Eigen::MatrixXd::Identity(a.dim, a.dim);
  d.rho = Eigen::VectorXd::Zero(a.dim);

  // Randomized correlated SPD scale: G G'/dim + I/2 keeps conditioning mild
  // while --design-seed varies the correlation pattern.
  std::mt19937_64 rng = make_rng(a.design_seed, 0x73697a65u);  // "size"
  std::normal_distribution<double> normal;
  Eigen::MatrixXd G(a.dim, a.dim);
  for (Eigen::Index i = 0; i < G.rows(); ++i) {
    for (Eigen::Index j = 0; j < G.cols(); ++j) G(i, j) = normal(rng);
  }
  d.Sigma = G * G.transpose() / static_cast<double>(a.dim) +
            0.5 * Eigen::MatrixXd::Identity(a.dim, a.dim);

  // mu sits on, inside, or beyond the boundary by --gap standard errors.
  const Eigen::VectorXd se =
      (d.Sigma.diagonal().array() / d.n).sqrt().matrix();
  if (a.kind == "boundary") {
    d.mu = Eigen::VectorXd::Zero(a.dim);
    d.relation = MuRelation::Boundary;
  } else if (a.kind == "interior") {
    d.mu = -a.gap * se;
    d.relation = MuRelation::Interior;
  } else if (a.kind == "violated") {
    d.mu = a.gap * se;
    d.relation = MuRelation::Violated;
  } else {
    throw ConfigInvalid("--design: expected boundary, interior, or violated");
  }
  return d;
}

int cmd_size_study(const SizeStudyArgs& a) {
  const SizeStudyDesign design = make_size_design(a);

  const auto t0 = std::chrono::steady_clock::now();
  const SizeStudyResult res = run_size_study(design, a.workers);
  const double elapsed = seconds_since(t0);

  const std::string hash = hash_options({
      {"design", a.kind},
      {"dim", std::to_string(a.dim)},
      {"gap", fmt17(a.gap)},
      {"design_seed", std::to_string(a.design_seed)},
      {"n", fmt17(a.n)},
      {"reps", std::to_string(a.reps)},
      {"alpha", fmt17(a.alpha)},
      {"seed", std::to_string(a.seed)},
  });

  json j;
  j["schema"] = 1;
  j["design"] = {
      {"kind", a.kind},       {"dim", a.dim},
      {"gap_se", a.gap},      {"design_seed", a.design_seed},
      {"A", matrix_json(design.A)},
      {"rho", vector_json(design.rho)},
      {"Sigma", matrix_json(design.Sigma)},
      {"mu", vector_json(design.mu)},
      {"n", design.n},
  };
  j["alpha"] = a.alpha;
  j["reps"] = a.reps;
  j["seed"] = a.seed;
  j["results"] = {
      {"rejection_rate", res.rejection_rate},
      {"se", res.se},
      {"rejected", res.rejected},
      {"reps_run", res.reps},
      {"truncated", res.truncated},
  };
  j["metadata"] = {{"version", kVersion},
                   {"seed", std::to_string(a.seed)},
                   {"config_hash", hash}};
  write_json_file(j, a.out_path);

  std::printf("%s design, dim %d: rejection rate %.6g (se %.3g), %d/%d%s\n",
              a.kind.c_str(), a.dim, res.rejection_rate, res.se, res.rejected,
              res.reps, res.truncated ? " [truncated]" : "");
  std::printf("wrote %s\n", a.out_path.c_str());
  std::printf("study took %.2fs\n", elapsed);
  return 0;
}

// ---------------------------------------------------------------------------
// coverage-study

struct CoverageArgs {
  DgpFlags dgp;
  FsFlags fs;  // tolerances only; draws/sigma come from the DGP config
  double alpha = 0.05;
  int reps = 500;
  std::uint64_t seed = 42;
  int workers = 0;
  double jacobian_step = 1e-5;
  std::string out_path = "coverage_study.json";
};

int cmd_coverage_study(const CoverageArgs& a) {
  CoverageConfig cc;
  cc.dgp = a.dgp.resolve();
  cc.alpha = a.alpha;
  cc.reps = a.reps;
  cc.seed = a.seed;
  cc.first_stage = a.fs.opt;
  cc.jacobian_step = a.jacobian_step;

  const auto t0 = std::chrono::steady_clock::now();
  const CoverageResult res = run_coverage_study(cc, a.workers);
  const double elapsed = seconds_since(t0);

  OptionList opts = DgpFlags::echo(cc.dgp);
  opts.emplace_back("alpha", fmt17(a.alpha));
  opts.emplace_back("reps", std::to_string(a.reps));
  opts.emplace_back("seed", std::to_string(a.seed));
  opts.emplace_back("tol", fmt17(cc.first_stage.tol));
  opts.emplace_back("max_iter", std::to_string(cc.first_stage.max_iter));
  opts.emplace_back("jacobian_step", fmt17(a.jacobian_step));
  const std::string hash = hash_options(opts);

  json cfg;
  for (const auto& [k, v] : DgpFlags::echo(cc.dgp)) cfg[k] = v;
  cfg["alpha"] = a.alpha;
  cfg["reps"] = a.reps;
  cfg["seed"] = a.seed;
  cfg["tol"] = cc.first_stage.tol;
  cfg["max_iter"] = cc.first_stage.max_iter;
  cfg["jacobian_step"] = a.jacobian_step;

  json j;
  j["schema"] = 1;
  j["config"] = cfg;
  j["results"] = {
      {"coverage_rate",
       res.completed > 0 ? json(res.coverage_rate) : json(nullptr)},
      {"se", res.se_defined ? json(res.se) : json(nullptr)},
      {"se_defined", res.se_defined},
      {"reps", res.reps},
      {"completed", res.completed},
      {"accepted", res.accepted},
      {"dgp_failures", res.dgp_failures},
      {"first_stage_failures", res.first_stage_failures},
      {"decision_failures", res.decision_failures},
      {"truncated", res.truncated},
  };
  j["metadata"] = {{"version", kVersion},
                   {"seed", std::to_string(a.seed)},
                   {"config_hash", hash}};
  write_json_file(j, a.out_path);

  if (res.completed > 0) {
    std::printf("coverage %.6g", res.coverage_rate);
    if (res.se_defined) {
      std::printf(" (se %.3g)", res.se);
    } else {
      std::printf(" (se undefined)");
    }
    std::printf(", accepted %d/%d completed\n", res.accepted, res.completed);
  } else {
    std::printf("coverage undefined: no replication completed\n");
  }
  std::printf("failures: %d dgp, %d first-stage, %d decision%s\n",
              res.dgp_failures, res.first_stage_failures,
              res.decision_failures, res.truncated ? " [truncated]" : "");
  std::printf("wrote %s\n", a.out_path.c_str());
  std::printf("study took %.2fs\n", elapsed);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, +[](int) { sepmi::interrupt_flag().store(true); });

  CLI::App app{
      "sepmi: two-stage inference on separable moment-inequality models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  SimulateArgs sim;
  CLI::App* c_sim = app.add_subcommand(
      "simulate", "generate a synthetic demand panel with entry/exit events");
  sim.dgp.attach(c_sim);
  c_sim->add_option("--out", sim.out_dir, "output directory");
  c_sim->add_option("--seed", sim.seed, "generator seed");

  FirstStageArgs fst;
  CLI::App* c_fst = app.add_subcommand(
      "first-stage", "estimate demand parameters from a panel CSV");
  fst.fs.attach(c_fst);
  c_fst->add_option("--demand", fst.demand_path, "demand panel CSV")
      ->required();
  c_fst->add_option("--out", fst.out_path, "output JSON path");

  RccTestArgs rcc;
  CLI::App* c_rcc = app.add_subcommand(
      "rcc-test", "run the refined chi-squared test at one parameter point");
  rcc.fs.attach(c_rcc);
  c_rcc->add_option("--demand", rcc.demand_path, "demand panel CSV")
      ->required();
  c_rcc->add_option("--events", rcc.events_path, "entry/exit events CSV")
      ->required();
  c_rcc->add_option("--theta", rcc.theta_text,
                    "test point: lambda,eta1,...,eta4")
      ->required();
  c_rcc->add_option("--alpha", rcc.alpha, "test level");
  c_rcc->add_option("--jacobian-step", rcc.jacobian_step,
                    "first-stage Jacobian step");
  c_rcc->add_option("--first-stage", rcc.first_stage_path,
                    "cross-check against a stored first-stage JSON");

  ConfsetArgs cs;
  CLI::App* c_cs = app.add_subcommand(
      "confset", "invert the test over a parameter grid");
  cs.fs.attach(c_cs);
  c_cs->add_option("--demand", cs.demand_path, "demand panel CSV")->required();
  c_cs->add_option("--events", cs.events_path, "entry/exit events CSV")
      ->required();
  c_cs->add_option("--out", cs.out_dir, "output directory");
  c_cs->add_option("--grid-lambda", cs.grid_lambda,
                   "lambda grid, 'lo:hi:count' or a single value")
      ->required();
  c_cs->add_option("--grid-eta1", cs.grid_eta1, "eta1 grid")->required();
  c_cs->add_option("--grid-eta2", cs.grid_eta2, "eta2 grid")->required();
  c_cs->add_option("--grid-eta3", cs.grid_eta3, "eta3 grid")->required();
  c_cs->add_option("--grid-eta4", cs.grid_eta4, "eta4 grid")->required();
  c_cs->add_option("--slice", cs.slices,
                   "pin a dimension for the CSV slice (name=value; repeat)");
  c_cs->add_option("--alpha", cs.alpha, "test level");
  c_cs->add_option("--jacobian-step", cs.jacobian_step,
                   "first-stage Jacobian step");
  c_cs->add_option("--seed", cs.seed, "recorded run seed");
  c_cs->add_option("--workers", cs.workers,
                   "worker threads (0 = SEPMI_WORKERS or hardware)");
  c_cs->add_option("--first-stage", cs.first_stage_path,
                   "cross-check against a stored first-stage JSON");

  EliminateArgs el;
  CLI::App* c_el = app.add_subcommand(
      "eliminate",
      "project the nuisance out of B mu_M - C mu_N <= d by vertex enumeration");
  c_el->add_option("--b", el.b_path, "B matrix CSV")->required();
  c_el->add_option("--c", el.c_path, "C matrix CSV")->required();
  c_el->add_option("--d", el.d_path, "d vector CSV")->required();
  c_el->add_option("--out", el.out_dir, "output directory");
  c_el->add_option("--cap", el.cap, "nuisance dimension cap");

  SizeStudyArgs sz;
  CLI::App* c_sz = app.add_subcommand(
      "size-study", "Monte Carlo size of the test under exact normal moments");
  c_sz->add_option("--design", sz.kind, "boundary | interior | violated");
  c_sz->add_option("--dim", sz.dim, "moment dimension");
  c_sz->add_option("--gap", sz.gap,
                   "interior/violated offset in standard errors");
  c_sz->add_option("--design-seed", sz.design_seed,
                   "seed of the randomized covariance");
  c_sz->add_option("--n", sz.n, "nominal sample size");
  c_sz->add_option("--reps", sz.reps, "Monte Carlo replications");
  c_sz->add_option("--alpha", sz.alpha, "test level");
  c_sz->add_option("--seed", sz.seed, "replication seed");
  c_sz->add_option("--workers", sz.workers,
                   "worker threads (0 = SEPMI_WORKERS or hardware)");
  c_sz->add_option("--out", sz.out_path, "output JSON path");

  CoverageArgs cov;
  CLI::App* c_cov = app.add_subcommand(
      "coverage-study",
      "Monte Carlo coverage of the true parameter over the full pipeline");
  cov.dgp.attach(c_cov);
  c_cov->add_option("--alpha", cov.alpha, "test level");
  c_cov->add_option("--reps", cov.reps, "Monte Carlo replications");
  c_cov->add_option("--seed", cov.seed, "master seed");
  c_cov->add_option("--workers", cov.workers,
                    "worker threads (0 = SEPMI_WORKERS or hardware)");
  c_cov->add_option("--jacobian-step", cov.jacobian_step,
                    "first-stage Jacobian step");
  c_cov->add_option("--tol", cov.fs.opt.tol, "first-stage BFGS tolerance");
  c_cov->add_option("--max-iter", cov.fs.opt.max_iter,
                    "first-stage iteration cap");
  c_cov->add_option("--out", cov.out_path, "output JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // help/version exit clean, bad flags are config errors
  }

  try {
    if (c_sim->parsed()) return cmd_simulate(sim);
    if (c_fst->parsed()) return cmd_first_stage(fst);
    if (c_rcc->parsed()) return cmd_rcc_test(rcc);
    if (c_cs->parsed()) return cmd_confset(cs);
    if (c_el->parsed()) return cmd_eliminate(el);
    if (c_sz->parsed()) return cmd_size_study(sz);
    if (c_cov->parsed()) return cmd_coverage_study(cov);
  } catch (const sepmi::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return sepmi::exit_code_for(e.cls);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 5;
  }
  return 0;
}
