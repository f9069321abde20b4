#include "sepmi/io.hpp"

#include <json.hpp>

#include <cerrno>
#include <climits>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "sepmi/errors.hpp"
#include "sepmi/hash.hpp"
#include "sepmi/version.hpp"

namespace sepmi {

namespace {

std::string fmt17(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_meta_block(std::ofstream& out, const char* kind,
                      const MetaLines& meta) {
  out << "# sepmi " << kind << " v" << kVersion << "\n";
  for (const auto& [key, value] : meta) out << "# " << key << ": " << value << "\n";
}

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (;;) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

double parse_double(const std::string& cell, const std::string& path,
                    int line) {
  errno = 0;
  const char* begin = cell.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end != begin + cell.size() || cell.empty() || errno == ERANGE)
    throw SchemaInvalid(path + " line " + std::to_string(line) +
                        ": bad number '" + cell + "'");
  return v;
}

int parse_int(const std::string& cell, const std::string& path, int line) {
  errno = 0;
  const char* begin = cell.c_str();
  char* end = nullptr;
  const long v = std::strtol(begin, &end, 10);
  if (end != begin + cell.size() || cell.empty() || errno == ERANGE ||
      v < INT_MIN || v > INT_MAX)
    throw SchemaInvalid(path + " line " + std::to_string(line) +
                        ": bad integer '" + cell + "'");
  return static_cast<int>(v);
}

// Reads content lines (comments and blanks skipped), keeping 1-based
// physical line numbers for diagnostics.
std::vector<std::pair<int, std::string>> content_lines(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open: " + path);
  std::vector<std::pair<int, std::string>> lines;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    number++;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    lines.emplace_back(number, line);
  }
  return lines;
}

const char* const kDemandPrefix[] = {
    "market", "period",        "firm",     "product",
    "gvwr",   "cab_over",      "compact_front", "long_cab",
    "price",  "mc",            "quantity", "market_size",
};
constexpr int kDemandFixed = 12;

}  // namespace

DemandData read_demand_csv(const std::string& path) {
  const auto lines = content_lines(path);
  if (lines.empty()) throw SchemaInvalid(path + ": missing header");

  const auto header = split_cells(lines[0].second);
  if (static_cast<int>(header.size()) < kDemandFixed)
    throw SchemaInvalid(path + ": header has " +
                        std::to_string(header.size()) + " columns, expected " +
                        std::to_string(kDemandFixed) + " plus instruments");
  for (int c = 0; c < kDemandFixed; ++c)
    if (header[static_cast<std::size_t>(c)] != kDemandPrefix[c])
      throw SchemaInvalid(path + ": header column " + std::to_string(c + 1) +
                          " is '" + header[static_cast<std::size_t>(c)] +
                          "', expected '" + kDemandPrefix[c] + "'");
  const int m = static_cast<int>(header.size()) - kDemandFixed;
  for (int c = 0; c < m; ++c) {
    const std::string expect = "instrument_" + std::to_string(c + 1);
    if (header[static_cast<std::size_t>(kDemandFixed + c)] != expect)
      throw SchemaInvalid(path + ": header column " +
                          std::to_string(kDemandFixed + c + 1) +
                          " should be '" + expect + "'");
  }

  DemandData data;
  std::set<int> seen_markets;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto& [number, text] = lines[r];
    const auto cells = split_cells(text);
    if (static_cast<int>(cells.size()) != kDemandFixed + m)
      throw SchemaInvalid(path + " line " + std::to_string(number) + ": " +
                          std::to_string(cells.size()) + " cells, expected " +
                          std::to_string(kDemandFixed + m));
    DemandObs obs;
    obs.market = parse_int(cells[0], path, number);
    obs.period = parse_int(cells[1], path, number);
    obs.firm = parse_int(cells[2], path, number);
    obs.product = parse_int(cells[3], path, number);
    obs.x.resize(4);
    for (int c = 0; c < 4; ++c)
      obs.x(c) = parse_double(cells[static_cast<std::size_t>(4 + c)], path, number);
    obs.price = parse_double(cells[8], path, number);
    obs.mc = parse_double(cells[9], path, number);
    obs.quantity = parse_double(cells[10], path, number);
    obs.market_size = parse_double(cells[11], path, number);
    obs.z.resize(m);
    for (int c = 0; c < m; ++c)
      obs.z(c) =
          parse_double(cells[static_cast<std::size_t>(kDemandFixed + c)], path, number);
    if (!(obs.market_size > 0.0))
      throw SchemaInvalid(path + " line " + std::to_string(number) +
                          ": market_size must be positive");
    obs.share = obs.quantity / obs.market_size;

    if (!data.markets.empty() && data.markets.back().market == obs.market) {
      if (data.markets.back().period != obs.period)
        throw SchemaInvalid(path + " line " + std::to_string(number) +
                            ": period changes inside market " +
                            std::to_string(obs.market));
    } else {
      if (!seen_markets.insert(obs.market).second)
        throw SchemaInvalid(path + " line " + std::to_string(number) +
                            ": market " + std::to_string(obs.market) +
                            " rows are not contiguous");
      DemandMarket market;
      market.market = obs.market;
      market.period = obs.period;
      data.markets.push_back(std::move(market));
    }
    data.markets.back().obs.push_back(std::move(obs));
  }
  return data;
}

void write_demand_csv(const DemandData& data, const std::string& path,
                      const MetaLines& meta) {
  if (data.total_obs() > 0 && data.dim_x() != 4)
    throw ShapeMismatch("demand csv schema fixes 4 characteristics, data has " +
                        std::to_string(data.dim_x()));
  const int m = data.total_obs() > 0 ? data.dim_z_file() : 0;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open for writing: " + path);
  write_meta_block(out, "demand-panel", meta);
  for (int c = 0; c < kDemandFixed; ++c)
    out << (c ? "," : "") << kDemandPrefix[c];
  for (int c = 0; c < m; ++c) out << ",instrument_" << (c + 1);
  out << "\n";
  for (const DemandMarket& market : data.markets) {
    for (const DemandObs& obs : market.obs) {
      if (obs.z.size() != m)
        throw ShapeMismatch("demand csv: uneven instrument counts");
      out << obs.market << "," << obs.period << "," << obs.firm << ","
          << obs.product;
      for (int c = 0; c < 4; ++c) out << "," << fmt17(obs.x(c));
      out << "," << fmt17(obs.price) << "," << fmt17(obs.mc) << ","
          << fmt17(obs.quantity) << "," << fmt17(obs.market_size);
      for (int c = 0; c < m; ++c) out << "," << fmt17(obs.z(c));
      out << "\n";
    }
  }
  if (!out.good()) throw IoFailure("write failed: " + path);
}

std::vector<VehicleEvent> read_events_csv(const std::string& path) {
  const auto lines = content_lines(path);
  if (lines.empty()) throw SchemaInvalid(path + ": missing header");
  if (lines[0].second != "firm,period,product,kind")
    throw SchemaInvalid(path + ": header must be firm,period,product,kind");
  std::vector<VehicleEvent> events;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto& [number, text] = lines[r];
    const auto cells = split_cells(text);
    if (cells.size() != 4)
      throw SchemaInvalid(path + " line " + std::to_string(number) +
                          ": expected 4 cells");
    VehicleEvent ev;
    ev.firm = parse_int(cells[0], path, number);
    ev.period = parse_int(cells[1], path, number);
    ev.product = parse_int(cells[2], path, number);
    if (cells[3] == "entry") {
      ev.kind = EventKind::Entry;
    } else if (cells[3] == "exit") {
      ev.kind = EventKind::Exit;
    } else {
      throw SchemaInvalid(path + " line " + std::to_string(number) +
                          ": kind must be entry or exit, got '" + cells[3] +
                          "'");
    }
    events.push_back(std::move(ev));
  }
  return events;
}

void write_events_csv(const std::vector<VehicleEvent>& events,
                      const std::string& path, const MetaLines& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open for writing: " + path);
  write_meta_block(out, "events", meta);
  out << "firm,period,product,kind\n";
  for (const VehicleEvent& ev : events)
    out << ev.firm << "," << ev.period << "," << ev.product << ","
        << (ev.kind == EventKind::Entry ? "entry" : "exit") << "\n";
  if (!out.good()) throw IoFailure("write failed: " + path);
}

Eigen::MatrixXd read_matrix_csv(const std::string& path) {
  const auto lines = content_lines(path);
  if (lines.empty()) return Eigen::MatrixXd(0, 0);
  std::vector<std::vector<double>> rows;
  for (const auto& [number, text] : lines) {
    const auto cells = split_cells(text);
    std::vector<double> row;
    row.reserve(cells.size());
    for (const std::string& cell : cells)
      row.push_back(parse_double(cell, path, number));
    if (!rows.empty() && row.size() != rows.front().size())
      throw SchemaInvalid(path + " line " + std::to_string(number) +
                          ": ragged row");
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.front().size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j];
  return m;
}

void write_matrix_csv(const Eigen::MatrixXd& m, const std::string& path,
                      const MetaLines& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open for writing: " + path);
  write_meta_block(out, "matrix", meta);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      out << (j ? "," : "") << fmt17(m(i, j));
    out << "\n";
  }
  if (!out.good()) throw IoFailure("write failed: " + path);
}

namespace {

nlohmann::json meta_object(const MetaLines& meta) {
  nlohmann::json obj;
  obj["version"] = kVersion;
  for (const auto& [key, value] : meta) obj[key] = value;
  return obj;
}

nlohmann::json parse_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open: " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaInvalid(path + ": " + e.what());
  }
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                           static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void write_first_stage_json(const FirstStageEstimate& fs,
                            const std::string& path, const MetaLines& meta) {
  std::string influence_bytes;
  {
    std::string all;
    char buf[48];
    for (const Eigen::VectorXd& psi : fs.influence)
      for (Eigen::Index i = 0; i < psi.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,", psi(i));
        all += buf;
      }
    influence_bytes = hex64(fnv1a(all));
  }
  nlohmann::json root;
  root["schema"] = 1;
  root["delta_hat"] = to_std(fs.delta_hat);
  root["objective"] = fs.objective_value;
  root["converged"] = fs.converged;
  root["iterations"] = fs.iterations;
  root["grad_norm"] = fs.grad_norm;
  root["influence_fingerprint"] = influence_bytes;
  root["g_fingerprint"] = fingerprint_doubles(fs.G.data(), fs.G.size());
  root["metadata"] = meta_object(meta);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open for writing: " + path);
  out << root.dump(2) << "\n";
  if (!out.good()) throw IoFailure("write failed: " + path);
}

FirstStageFile read_first_stage_json(const std::string& path) {
  const nlohmann::json root = parse_json_file(path);
  FirstStageFile file;
  try {
    file.delta_hat = to_eigen(root.at("delta_hat").get<std::vector<double>>());
    file.objective = root.at("objective").get<double>();
    file.converged = root.at("converged").get<bool>();
    file.iterations = root.at("iterations").get<int>();
    file.influence_fingerprint =
        root.at("influence_fingerprint").get<std::string>();
    file.g_fingerprint = root.at("g_fingerprint").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaInvalid(path + ": " + e.what());
  }
  return file;
}

void write_truth_json(const SynthResult& truth, const DgpConfig& config,
                      const std::string& path, const MetaLines& meta) {
  nlohmann::json root;
  root["schema"] = 1;
  root["theta_true"] = {{"lambda", truth.theta_true.lambda},
                        {"eta", to_std(truth.theta_true.eta)}};
  root["delta_true"] = to_std(truth.delta_true);
  root["draws"] = {{"R", truth.draws.R}, {"seed", truth.draws.seed}};
  nlohmann::json cfg;
  cfg["num_products"] = config.num_products;
  cfg["num_periods"] = config.num_periods;
  cfg["num_firms"] = config.num_firms;
  cfg["draws"] = config.draws;
  cfg["sigma_beta"] = config.sigma_beta;
  cfg["sigma_alpha"] = config.sigma_alpha;
  cfg["beta_true"] = to_std(truth.delta_true.head(truth.delta_true.size() - 1));
  cfg["alpha_true"] = config.alpha_true;
  cfg["lambda_true"] = config.lambda_true;
  cfg["eta_true"] = to_std(truth.theta_true.eta);
  cfg["xi_sd"] = config.xi_sd;
  cfg["initial_offer_prob"] = config.initial_offer_prob;
  cfg["move_prob"] = config.move_prob;
  cfg["slack_lo"] = config.slack_lo;
  cfg["slack_hi"] = config.slack_hi;
  cfg["market_size_lo"] = config.market_size_lo;
  cfg["market_size_hi"] = config.market_size_hi;
  root["config"] = std::move(cfg);
  root["metadata"] = meta_object(meta);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open for writing: " + path);
  out << root.dump(2) << "\n";
  if (!out.good()) throw IoFailure("write failed: " + path);
}

TruthFile read_truth_json(const std::string& path) {
  const nlohmann::json root = parse_json_file(path);
  TruthFile file;
  try {
    file.theta.lambda = root.at("theta_true").at("lambda").get<double>();
    file.theta.eta = to_eigen(
        root.at("theta_true").at("eta").get<std::vector<double>>());
    file.delta = to_eigen(root.at("delta_true").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaInvalid(path + ": " + e.what());
  }
  return file;
}

}  // namespace sepmi
