#include "sepmi/confset.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <utility>

#include "sepmi/errors.hpp"
#include "sepmi/hash.hpp"
#include "sepmi/parallel.hpp"
#include "sepmi/qp.hpp"
#include "sepmi/version.hpp"

namespace sepmi {

namespace {

constexpr std::size_t kMaxGridPoints = 10'000'000;

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

GridDim GridDim::fixed(std::string label, double value) {
  GridDim d;
  d.label = std::move(label);
  d.lo = d.hi = value;
  d.count = 1;
  return d;
}

GridDim GridDim::range(std::string label, double lo, double hi, int count) {
  GridDim d;
  d.label = std::move(label);
  d.lo = lo;
  d.hi = hi;
  d.count = count;
  return d;
}

double GridDim::value_at(int idx) const {
  if (idx < 0 || idx >= count)
    throw ShapeMismatch("grid: coordinate index out of range for " + label);
  if (idx == 0) return lo;
  if (idx == count - 1) return hi;
  return lo + (hi - lo) * static_cast<double>(idx) / (count - 1);
}

void GridSpec::validate() const {
  if (dims.empty()) throw ConfigInvalid("grid: no dimensions");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ConfigInvalid("grid: alpha must lie in (0, 1)");
  std::set<std::string> seen;
  std::size_t n = 1;
  for (const GridDim& d : dims) {
    if (d.label.empty()) throw ConfigInvalid("grid: empty dimension label");
    if (!seen.insert(d.label).second)
      throw ConfigInvalid("grid: duplicate dimension " + d.label);
    if (d.count < 1) throw ConfigInvalid("grid: count < 1 for " + d.label);
    if (!std::isfinite(d.lo) || !std::isfinite(d.hi))
      throw ConfigInvalid("grid: non-finite bounds for " + d.label);
    if (d.lo > d.hi) throw ConfigInvalid("grid: lo > hi for " + d.label);
    if (d.count == 1 && d.lo != d.hi)
      throw ConfigInvalid("grid: single-point dimension " + d.label +
                          " needs lo == hi");
    if (d.count > 1 && d.lo == d.hi)
      throw ConfigInvalid("grid: repeated coordinates for " + d.label);
    n *= static_cast<std::size_t>(d.count);
    if (n > kMaxGridPoints)
      throw ConfigInvalid("grid: more than 10^7 points requested");
  }
}

std::size_t GridSpec::total_points() const {
  std::size_t n = 1;
  for (const GridDim& d : dims) n *= static_cast<std::size_t>(d.count);
  return n;
}

Eigen::VectorXd GridSpec::point_at(std::size_t flat) const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(dims.size()));
  for (int d = static_cast<int>(dims.size()) - 1; d >= 0; --d) {
    const GridDim& dim = dims[static_cast<std::size_t>(d)];
    v(d) = dim.value_at(static_cast<int>(flat % dim.count));
    flat /= static_cast<std::size_t>(dim.count);
  }
  if (flat != 0) throw ShapeMismatch("grid: flat index out of range");
  return v;
}

std::size_t ConfidenceGrid::num_accepted() const {
  std::size_t n = 0;
  for (const GridPointResult& p : points) n += p.accepted() ? 1 : 0;
  return n;
}

std::size_t ConfidenceGrid::num_undecided() const {
  std::size_t n = 0;
  for (const GridPointResult& p : points) n += p.decided ? 0 : 1;
  return n;
}

ConfidenceGrid invert_test(const GridSpec& spec, const MomentModel& model,
                           const FirstStageEstimate& first_stage,
                           const InvertOptions& opt) {
  spec.validate();
  if (!first_stage.converged)
    throw ConfigInvalid("confidence grid: first stage did not converge");
  if (static_cast<int>(first_stage.influence.size()) != model.num_obs())
    throw ShapeMismatch(
        "confidence grid: influence count " +
        std::to_string(first_stage.influence.size()) + " != observations " +
        std::to_string(model.num_obs()));

  // Probe the constraint assembly once so a theta-dimension mismatch is a
  // hard config error instead of a page of identical undecided points.
  (void)constraint_matrix(model, spec.point_at(0));

  ConfidenceGrid grid;
  grid.spec = spec;
  grid.seed = opt.seed;
  grid.dataset_id = opt.dataset_id;
  grid.delta_fingerprint = fingerprint_doubles(
      first_stage.delta_hat.data(), first_stage.delta_hat.size());
  const std::size_t total = spec.total_points();
  grid.points.assign(total, GridPointResult{});

  const double n = static_cast<double>(model.num_obs());
  const int workers = opt.workers > 0 ? opt.workers : default_workers();
  const int ran =
      parallel_for(static_cast<int>(total), workers, [&](int i) {
        GridPointResult& slot = grid.points[static_cast<std::size_t>(i)];
        slot.theta = grid.spec.point_at(static_cast<std::size_t>(i));
        try {
          const Eigen::MatrixXd A = constraint_matrix(model, slot.theta);
          const Eigen::VectorXd rho = model.vec_rho(slot.theta);
          const Eigen::VectorXd pbar =
              moment_pbar(model, slot.theta, first_stage.delta_hat);
          const Eigen::MatrixXd P = jacobian_p_delta(
              model, slot.theta, first_stage.delta_hat, opt.jacobian_step);
          SpdMatrix Sigma =
              corrected_covariance(model, slot.theta, first_stage, P);
          QpProblem problem(pbar, std::move(Sigma), A, rho, n);
          const QpSolution qp = solve_projection(problem);
          slot.rcc = rcc_decide(qp, A, rho, problem.Sigma, n, grid.spec.alpha);
          slot.decided = true;
        } catch (const Error& e) {
          slot.failure = e.what();
        } catch (const std::exception& e) {
          slot.failure = std::string("unexpected: ") + e.what();
        }
      });
  if (ran < static_cast<int>(total)) {
    grid.truncated = true;
    for (std::size_t i = 0; i < total; ++i) {
      GridPointResult& p = grid.points[i];
      if (!p.decided && p.failure.empty()) {
        if (p.theta.size() == 0) p.theta = spec.point_at(i);
        p.failure = "not evaluated (run truncated)";
      }
    }
  }
  return grid;
}

void export_slices(const ConfidenceGrid& grid,
                   const std::vector<std::pair<std::string, double>>& fixed,
                   const std::string& path,
                   const std::vector<std::string>& extra_comments) {
  const GridSpec& spec = grid.spec;
  if (grid.points.size() != spec.total_points())
    throw ShapeMismatch("slice export: grid holds " +
                        std::to_string(grid.points.size()) +
                        " points but the spec declares " +
                        std::to_string(spec.total_points()));

  const std::size_t nd = spec.dims.size();
  std::vector<int> pinned(nd, -1);  // matched coordinate index per dimension
  for (const auto& [label, value] : fixed) {
    std::size_t d = 0;
    while (d < nd && spec.dims[d].label != label) ++d;
    if (d == nd) throw SliceNotOnGrid("slice: unknown dimension " + label);
    if (pinned[d] >= 0)
      throw SliceNotOnGrid("slice: dimension pinned twice: " + label);
    int idx = -1;
    for (int i = 0; i < spec.dims[d].count; ++i) {
      const double c = spec.dims[d].value_at(i);
      if (std::abs(c - value) <= 1e-12 * std::max(1.0, std::abs(c))) {
        idx = i;
        break;
      }
    }
    if (idx < 0)
      throw SliceNotOnGrid("slice: value " + fmt_g(value) +
                           " is not a grid coordinate of " + label);
    pinned[d] = idx;
  }

  std::vector<std::size_t> free_dims;
  for (std::size_t d = 0; d < nd; ++d)
    if (pinned[d] < 0) free_dims.push_back(d);
  if (free_dims.size() != 2)
    throw SliceNotOnGrid("slice: need exactly 2 free dimensions, have " +
                         std::to_string(free_dims.size()));
  const GridDim& d1 = spec.dims[free_dims[0]];
  const GridDim& d2 = spec.dims[free_dims[1]];

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open for writing: " + path);
  out << "# sepmi confidence-slice v" << kVersion << "\n";
  out << "# seed: " << grid.seed << "\n";
  out << "# dataset: " << grid.dataset_id << "\n";
  out << "# delta_fingerprint: " << grid.delta_fingerprint << "\n";
  out << "# alpha: " << fmt_g(spec.alpha) << "\n";
  out << "# fixed:";
  for (std::size_t d = 0; d < nd; ++d)
    if (pinned[d] >= 0)
      out << " " << spec.dims[d].label << "="
          << fmt_g(spec.dims[d].value_at(pinned[d]));
  out << "\n";
  for (const std::string& line : extra_comments) out << "# " << line << "\n";
  out << d1.label << "," << d2.label << ",accepted,T,r_hat,beta,critical\n";

  std::vector<int> idx(nd, 0);
  for (std::size_t d = 0; d < nd; ++d) idx[d] = pinned[d] >= 0 ? pinned[d] : 0;
  auto flat_of = [&]() {
    std::size_t flat = 0;
    for (std::size_t d = 0; d < nd; ++d)
      flat = flat * static_cast<std::size_t>(spec.dims[d].count) +
             static_cast<std::size_t>(idx[d]);
    return flat;
  };
  for (int a = 0; a < d1.count; ++a) {
    for (int b = 0; b < d2.count; ++b) {
      idx[free_dims[0]] = a;
      idx[free_dims[1]] = b;
      const GridPointResult& p = grid.points[flat_of()];
      out << fmt_g(d1.value_at(a)) << "," << fmt_g(d2.value_at(b)) << ",";
      if (p.decided) {
        out << (p.accepted() ? 1 : 0) << "," << fmt_g(p.rcc.T) << ","
            << p.rcc.r_hat << "," << fmt_g(p.rcc.beta) << ","
            << fmt_g(p.rcc.critical) << "\n";
      } else {
        out << "0,nan,-1,nan,nan\n";
      }
    }
  }
  if (!out.good()) throw IoFailure("write failed: " + path);
}

void write_grid_json(
    const ConfidenceGrid& grid, const std::string& path,
    const std::vector<std::pair<std::string, std::string>>& extra_metadata) {
  nlohmann::json root;
  root["schema"] = 1;
  root["alpha"] = grid.spec.alpha;
  nlohmann::json dims = nlohmann::json::array();
  for (const GridDim& d : grid.spec.dims)
    dims.push_back({{"label", d.label},
                    {"lo", d.lo},
                    {"hi", d.hi},
                    {"count", d.count}});
  root["dims"] = std::move(dims);

  nlohmann::json meta;
  meta["version"] = kVersion;
  meta["seed"] = grid.seed;
  meta["dataset_id"] = grid.dataset_id;
  meta["delta_fingerprint"] = grid.delta_fingerprint;
  for (const auto& [k, v] : extra_metadata) meta[k] = v;
  root["metadata"] = std::move(meta);

  root["truncated"] = grid.truncated;
  root["num_points"] = grid.points.size();
  root["num_accepted"] = grid.num_accepted();
  root["num_undecided"] = grid.num_undecided();

  nlohmann::json pts = nlohmann::json::array();
  for (const GridPointResult& p : grid.points) {
    nlohmann::json rec;
    rec["theta"] =
        std::vector<double>(p.theta.data(), p.theta.data() + p.theta.size());
    rec["decided"] = p.decided;
    if (p.decided) {
      rec["accepted"] = p.accepted();
      rec["reject"] = p.rcc.reject;
      rec["T"] = p.rcc.T;
      rec["r_hat"] = p.rcc.r_hat;
      rec["beta"] = p.rcc.beta;
      rec["critical"] = p.rcc.critical;
    } else {
      rec["failure"] = p.failure;
    }
    pts.push_back(std::move(rec));
  }
  root["points"] = std::move(pts);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open for writing: " + path);
  out << root.dump(2) << "\n";
  if (!out.good()) throw IoFailure("write failed: " + path);
}

}  // namespace sepmi
