#include "sepmi/market.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <set>
#include <string>
#include <utility>

#include "sepmi/errors.hpp"
#include "sepmi/rng.hpp"

namespace sepmi {

int MarketDataset::dim_x() const {
  return types.empty() ? 0 : static_cast<int>(types.front().x.size());
}

const ProductType& MarketDataset::type_of(int product) const {
  for (const auto& t : types) {
    if (t.id == product) return t;
  }
  throw UnknownProduct("product " + std::to_string(product) +
                       " is not in the dataset");
}

const MarketState& MarketDataset::state_at(int period) const {
  for (const auto& s : states) {
    if (s.period == period) return s;
  }
  throw ConfigInvalid("no market state for period " + std::to_string(period));
}

Eigen::VectorXd SunkCostTheta::flat() const {
  Eigen::VectorXd v(1 + eta.size());
  v(0) = lambda;
  v.tail(eta.size()) = eta;
  return v;
}

SunkCostTheta SunkCostTheta::from_flat(const Eigen::VectorXd& v) {
  if (v.size() < 2) throw ConfigInvalid("theta must stack (lambda, eta)");
  SunkCostTheta t;
  t.lambda = v(0);
  t.eta = v.tail(v.size() - 1);
  return t;
}

namespace {

// Firm profit over one choice set: sum_j (p_j - mc_j) * market_size * s_j
// with shares simulated over exactly the products supplied.
double pi_core(const Eigen::MatrixXd& X, const Eigen::VectorXd& price,
               const Eigen::VectorXd& mc, const Eigen::VectorXd& zeta,
               double market_size, const Draws& draws) {
  if (X.rows() == 0) return 0.0;
  Eigen::MatrixXd shifts = het_shifts(draws, X, price);
  Eigen::VectorXd s = simulate_shares(zeta, shifts, draws.R);
  return market_size * (price - mc).cwiseProduct(s).sum();
}

}  // namespace

VehicleMarketModel::VehicleMarketModel(MarketDataset data)
    : data_(std::move(data)) {
  if (data_.events.empty()) throw EmptyEvents("no entry/exit events");
  if (data_.types.empty()) throw ConfigInvalid("dataset has no product types");
  for (std::size_t q = 0; q < data_.types.size(); ++q) {
    type_index_[data_.types[q].id] = static_cast<int>(q);
  }
  for (const auto& e : data_.events) {
    type_index(e.product);
    for (int j : e.set_now) type_index(j);
    for (int j : e.set_prev) type_index(j);
    data_.state_at(e.period);
  }
}

int VehicleMarketModel::type_index(int product) const {
  auto it = type_index_.find(product);
  if (it == type_index_.end()) {
    throw UnknownProduct("product " + std::to_string(product) +
                         " has no recorded characteristics");
  }
  return it->second;
}

int VehicleMarketModel::num_obs() const {
  return static_cast<int>(data_.events.size());
}

int VehicleMarketModel::dim_m() const {
  return data_.dim_x() * static_cast<int>(data_.types.size());
}

int VehicleMarketModel::dim_n() const {
  return static_cast<int>(data_.events.size());
}

void VehicleMarketModel::check_theta(const Eigen::VectorXd& theta) const {
  if (theta.size() != 1 + data_.dim_x()) {
    throw ShapeMismatch(
        "theta must stack (lambda, eta) with eta matching the "
        "characteristic count");
  }
  if (!theta.allFinite()) throw ConfigInvalid("theta must be finite");
}

Eigen::MatrixXd VehicleMarketModel::mat_b(const Eigen::VectorXd& theta) const {
  check_theta(theta);
  const SunkCostTheta t = SunkCostTheta::from_flat(theta);
  const int dx = data_.dim_x();
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(num_obs(), dim_m());
  for (int l = 0; l < num_obs(); ++l) {
    const auto& e = data_.events[static_cast<std::size_t>(l)];
    const int q = type_index(e.product);
    if (e.kind == EventKind::Entry) {
      B.row(l).segment(q * dx, dx) = t.eta.transpose();
    } else {
      B.row(l).segment(q * dx, dx) = -t.lambda * t.eta.transpose();
    }
  }
  return B;
}

Eigen::MatrixXd VehicleMarketModel::mat_c(const Eigen::VectorXd& theta) const {
  check_theta(theta);
  return Eigen::MatrixXd::Identity(num_obs(), num_obs());
}

Eigen::VectorXd VehicleMarketModel::vec_rho(const Eigen::VectorXd& theta) const {
  check_theta(theta);
  return Eigen::VectorXd::Zero(num_obs());
}

Eigen::VectorXd VehicleMarketModel::moment_m(int i,
                                             const Eigen::VectorXd& theta) const {
  check_theta(theta);
  if (i < 0 || i >= num_obs()) throw ConfigInvalid("observation out of range");
  const int dx = data_.dim_x();
  Eigen::VectorXd m(dim_m());
  for (std::size_t q = 0; q < data_.types.size(); ++q) {
    m.segment(static_cast<Eigen::Index>(q) * dx, dx) = data_.types[q].x;
  }
  return m;
}

Eigen::VectorXd VehicleMarketModel::moment_n(int i, const Eigen::VectorXd& theta,
                                             const Eigen::VectorXd& delta) const {
  check_theta(theta);
  if (i < 0 || i >= num_obs()) throw ConfigInvalid("observation out of range");
  const MarketState& st =
      data_.state_at(data_.events[static_cast<std::size_t>(i)].period);
  Eigen::VectorXd n(num_obs());
  for (int l = 0; l < num_obs(); ++l) {
    const auto& e = data_.events[static_cast<std::size_t>(l)];
    std::vector<int> j2 = e.set_now;
    if (e.kind == EventKind::Entry) {
      j2.erase(std::remove(j2.begin(), j2.end(), e.product), j2.end());
    } else {
      j2.push_back(e.product);
    }
    n(l) = profit_delta(st, e.set_now, j2, delta);
  }
  return n;
}

double VehicleMarketModel::profit_delta(const MarketState& state,
                                        const std::vector<int>& j1,
                                        const std::vector<int>& j2,
                                        const Eigen::VectorXd& delta) const {
  const int dx = data_.dim_x();
  if (delta.size() != dx + 1) {
    throw ShapeMismatch("delta must stack (beta, alpha)");
  }
  if (!delta.allFinite()) throw ConfigInvalid("delta must be finite");

  auto pi_of = [&](const std::vector<int>& set) {
    const int m = static_cast<int>(set.size());
    if (m == 0) return 0.0;
    Eigen::MatrixXd X(m, dx);
    Eigen::VectorXd price(m), mc(m), zeta(m);
    for (int r = 0; r < m; ++r) {
      const int j = set[static_cast<std::size_t>(r)];
      const ProductType& ty = data_.types[static_cast<std::size_t>(type_index(j))];
      X.row(r) = ty.x.transpose();
      auto pit = state.price.find(j);
      if (pit != state.price.end()) {
        price(r) = pit->second;
        mc(r) = state.mc.at(j);
        zeta(r) = state.zeta.at(j);
      } else {
        price(r) = imputed_price(j, state.period);
        mc(r) = imputed_mc(j, state.period);
        zeta(r) = ty.x.dot(delta.head(dx)) - delta(dx) * price(r);
      }
    }
    return pi_core(X, price, mc, zeta, state.market_size, data_.draws);
  };
  return pi_of(j1) - pi_of(j2);
}

namespace {

double carry_over(const std::vector<MarketState>& states, int product,
                  int period, const std::map<int, double> MarketState::*field) {
  const MarketState* best = nullptr;
  for (const auto& s : states) {
    if (s.period <= period && (s.*field).count(product)) {
      if (!best || s.period > best->period) best = &s;
    }
  }
  if (!best) {
    for (const auto& s : states) {
      if (s.period > period && (s.*field).count(product)) {
        if (!best || s.period < best->period) best = &s;
      }
    }
  }
  if (!best) {
    throw ConfigInvalid("product " + std::to_string(product) +
                        " is never observed in any period");
  }
  return (best->*field).at(product);
}

}  // namespace

double VehicleMarketModel::imputed_price(int product, int period) const {
  type_index(product);
  return carry_over(data_.states, product, period, &MarketState::price);
}

double VehicleMarketModel::imputed_mc(int product, int period) const {
  type_index(product);
  return carry_over(data_.states, product, period, &MarketState::mc);
}

MomentSystem build_moment_rows(const VehicleMarketModel& model,
                               const Eigen::VectorXd& theta,
                               const Eigen::VectorXd& delta) {
  MomentSystem sys;
  sys.B = model.mat_b(theta);
  sys.C = model.mat_c(theta);
  sys.rho = model.vec_rho(theta);
  const int k = model.dim_n();
  const int n = model.num_obs();
  sys.values.resize(k, n);
  for (int i = 0; i < n; ++i) {
    sys.values.col(i) = sys.B * model.moment_m(i, theta) -
                        sys.C * model.moment_n(i, theta, delta);
  }
  return sys;
}

std::vector<Eigen::VectorXd> event_influence(
    const MarketDataset& data, const DemandData& demand,
    const std::vector<Eigen::VectorXd>& demand_psi) {
  if (static_cast<int>(demand_psi.size()) != demand.total_obs()) {
    throw ShapeMismatch("one influence value per demand observation required");
  }
  std::map<std::pair<int, int>, int> row;
  int idx = 0;
  for (const auto& mkt : demand.markets) {
    for (const auto& obs : mkt.obs) {
      row[{mkt.period, obs.product}] = idx++;
    }
  }
  std::vector<Eigen::VectorXd> out;
  out.reserve(data.events.size());
  for (const auto& e : data.events) {
    const int t = e.kind == EventKind::Entry ? e.period : e.period - 1;
    auto it = row.find({t, e.product});
    if (it == row.end()) {
      throw SchemaInvalid("event product " + std::to_string(e.product) +
                          " has no demand row in period " + std::to_string(t));
    }
    out.push_back(demand_psi[static_cast<std::size_t>(it->second)]);
  }
  return out;
}

MarketDataset make_market_dataset(const DemandData& demand,
                                  const std::vector<VehicleEvent>& events,
                                  const Draws& draws) {
  if (demand.total_obs() == 0) throw EmptyData("no demand observations");
  MarketDataset ds;
  ds.draws = draws;

  std::map<int, ProductType> types;
  std::map<int, std::map<int, std::vector<int>>> sets;  // period -> firm -> ids
  std::set<int> periods;
  for (const auto& mkt : demand.markets) {
    if (mkt.obs.empty()) continue;
    if (mkt.zeta.size() != static_cast<Eigen::Index>(mkt.obs.size())) {
      throw ConfigInvalid("market " + std::to_string(mkt.market) +
                          " has no inverted utilities; run the demand stage");
    }
    if (!periods.insert(mkt.period).second) {
      throw SchemaInvalid("duplicate period " + std::to_string(mkt.period));
    }
    MarketState st;
    st.period = mkt.period;
    st.market_size = mkt.obs.front().market_size;
    for (std::size_t j = 0; j < mkt.obs.size(); ++j) {
      const DemandObs& o = mkt.obs[j];
      if (o.market_size != st.market_size) {
        throw SchemaInvalid("market_size differs within period " +
                            std::to_string(mkt.period));
      }
      if (st.price.count(o.product)) {
        throw SchemaInvalid("product " + std::to_string(o.product) +
                            " appears twice in period " +
                            std::to_string(mkt.period));
      }
      st.offered.push_back(o.product);
      st.price[o.product] = o.price;
      st.mc[o.product] = o.mc;
      st.zeta[o.product] = mkt.zeta(static_cast<Eigen::Index>(j));
      auto it = types.find(o.product);
      if (it == types.end()) {
        types[o.product] = ProductType{o.product, o.firm, o.x};
      } else {
        if (it->second.firm != o.firm) {
          throw SchemaInvalid("product " + std::to_string(o.product) +
                              " is assigned to two firms");
        }
        if ((it->second.x - o.x).cwiseAbs().maxCoeff() != 0.0) {
          throw SchemaInvalid("product " + std::to_string(o.product) +
                              " has inconsistent characteristics");
        }
      }
      sets[mkt.period][o.firm].push_back(o.product);
    }
    std::sort(st.offered.begin(), st.offered.end());
    ds.states.push_back(std::move(st));
  }
  std::sort(ds.states.begin(), ds.states.end(),
            [](const MarketState& a, const MarketState& b) {
              return a.period < b.period;
            });
  for (auto& kv : types) ds.types.push_back(kv.second);
  for (auto& per : sets) {
    for (auto& fs : per.second) std::sort(fs.second.begin(), fs.second.end());
  }

  for (const auto& raw : events) {
    VehicleEvent e = raw;
    if (!types.count(e.product)) {
      throw UnknownProduct("event references product " +
                           std::to_string(e.product) +
                           " absent from the demand data");
    }
    if (types.at(e.product).firm != e.firm) {
      throw SchemaInvalid("event firm " + std::to_string(e.firm) +
                          " does not own product " + std::to_string(e.product));
    }
    if (!periods.count(e.period) || !periods.count(e.period - 1)) {
      throw SchemaInvalid("event in period " + std::to_string(e.period) +
                          " needs demand data for that period and the one "
                          "before");
    }
    e.set_now = sets[e.period][e.firm];
    e.set_prev = sets[e.period - 1][e.firm];
    const bool in_now = std::count(e.set_now.begin(), e.set_now.end(), e.product) > 0;
    const bool in_prev =
        std::count(e.set_prev.begin(), e.set_prev.end(), e.product) > 0;
    if (e.kind == EventKind::Entry && !(in_now && !in_prev)) {
      throw SchemaInvalid("entry event for product " +
                          std::to_string(e.product) + " in period " +
                          std::to_string(e.period) +
                          " contradicts the offered sets");
    }
    if (e.kind == EventKind::Exit && !(!in_now && in_prev)) {
      throw SchemaInvalid("exit event for product " +
                          std::to_string(e.product) + " in period " +
                          std::to_string(e.period) +
                          " contradicts the offered sets");
    }
    ds.events.push_back(std::move(e));
  }
  return ds;
}

namespace {

void check_config(const DgpConfig& c) {
  auto bad = [](const std::string& field) {
    throw ConfigInvalid("dgp config: invalid " + field);
  };
  if (c.num_products < 1 || c.num_products > 30) bad("num_products");
  if (c.num_periods < 2) bad("num_periods");
  if (c.num_firms < 1) bad("num_firms");
  if (c.draws < 1) bad("draws");
  if (c.sigma_beta < 0.0) bad("sigma_beta");
  if (c.sigma_alpha < 0.0) bad("sigma_alpha");
  if (c.beta_true.size() != 0 && c.beta_true.size() != 4) bad("beta_true");
  if (c.eta_true.size() != 0 && c.eta_true.size() != 4) bad("eta_true");
  if (!std::isfinite(c.alpha_true)) bad("alpha_true");
  if (!(c.lambda_true >= 0.0 && c.lambda_true <= 1.0)) bad("lambda_true");
  if (c.xi_sd < 0.0) bad("xi_sd");
  if (!(c.initial_offer_prob >= 0.0 && c.initial_offer_prob <= 1.0)) {
    bad("initial_offer_prob");
  }
  if (!(c.move_prob >= 0.0 && c.move_prob <= 1.0)) bad("move_prob");
  if (c.slack_lo < 0.0 || c.slack_hi < c.slack_lo) bad("slack_lo/slack_hi");
  if (!(c.market_size_lo > 0.0 && c.market_size_hi >= c.market_size_lo)) {
    bad("market_size_lo/market_size_hi");
  }
}

}  // namespace

SynthResult synth_dgp(const DgpConfig& cfg, std::uint64_t seed) {
  check_config(cfg);
  const int dX = 4;
  const int J = cfg.num_products;
  const int T = cfg.num_periods;
  const int F = cfg.num_firms;
  Eigen::VectorXd beta(4);
  if (cfg.beta_true.size() == 4) {
    beta = cfg.beta_true;
  } else {
    beta << 1.0, 0.4, -0.5, 0.3;
  }
  Eigen::VectorXd eta(4);
  if (cfg.eta_true.size() == 4) {
    eta = cfg.eta_true;
  } else {
    eta << 1.5, 2.0, 2.0, 1.0;
  }
  const double alpha = cfg.alpha_true;
  const double lambda = cfg.lambda_true;

  Draws draws = Draws::make(cfg.draws, Eigen::VectorXd::Constant(4, cfg.sigma_beta),
                            cfg.sigma_alpha, seed);

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Product characteristics: weight rating plus three design flags.
  auto chars_rng = make_rng(seed, 1);
  std::vector<ProductType> types(static_cast<std::size_t>(J));
  for (int j = 0; j < J; ++j) {
    ProductType& ty = types[static_cast<std::size_t>(j)];
    ty.id = j + 1;
    ty.firm = (j % F) + 1;
    ty.x.resize(dX);
    ty.x(0) = 0.5 + 2.5 * unif(chars_rng);
    for (int c = 1; c < dX; ++c) ty.x(c) = unif(chars_rng) < 0.5 ? 1.0 : 0.0;
  }

  // Complete internal panel: every product priced in every period.
  auto panel_rng = make_rng(seed, 2);
  Eigen::MatrixXd price(J, T), mc(J, T), zeta_true(J, T), wins(J, T);
  Eigen::VectorXd msize(T);
  for (int t = 0; t < T; ++t) {
    msize(t) = cfg.market_size_lo +
               (cfg.market_size_hi - cfg.market_size_lo) * unif(panel_rng);
    for (int j = 0; j < J; ++j) {
      const double g = types[static_cast<std::size_t>(j)].x(0);
      const double w = unif(panel_rng);
      const double xi = cfg.xi_sd * normal(panel_rng);
      const double nu_p = normal(panel_rng);
      const double nu_c = normal(panel_rng);
      wins(j, t) = w;
      price(j, t) = 1.2 + 0.5 * g + 0.4 * w + 0.8 * xi + 0.1 * nu_p;
      // Cost shocks are invisible to consumers, so margins swing over time
      // without moving shares: the same product can clear the entry screen
      // in a fat-margin spell and the exit screen in a thin one.
      mc(j, t) = 0.6 + 0.25 * g + 0.3 * w + 0.25 * nu_c;
      zeta_true(j, t) =
          types[static_cast<std::size_t>(j)].x.dot(beta) - alpha * price(j, t) + xi;
    }
  }

  auto pi_true = [&](const std::vector<int>& set, int t) {
    const int m = static_cast<int>(set.size());
    if (m == 0) return 0.0;
    Eigen::MatrixXd X(m, dX);
    Eigen::VectorXd p(m), c(m), z(m);
    for (int r = 0; r < m; ++r) {
      const int j = set[static_cast<std::size_t>(r)] - 1;
      X.row(r) = types[static_cast<std::size_t>(j)].x.transpose();
      p(r) = price(j, t);
      c(r) = mc(j, t);
      z(r) = zeta_true(j, t);
    }
    return pi_core(X, p, c, z, msize(t), draws);
  };

  // Threshold rule: a proposed move must clear the sample inequality at the
  // truth, averaged across the whole panel, by a structural-slack draw.
  auto avg_margin = [&](const std::vector<int>& j1, const std::vector<int>& j2,
                        int product, EventKind kind) {
    double acc = 0.0;
    for (int t = 0; t < T; ++t) acc += pi_true(j1, t) - pi_true(j2, t);
    acc /= static_cast<double>(T);
    const double sunk = types[static_cast<std::size_t>(product - 1)].x.dot(eta);
    return kind == EventKind::Entry ? acc - sunk : acc + lambda * sunk;
  };

  auto move_rng = make_rng(seed, 3);
  std::vector<std::set<int>> offered(static_cast<std::size_t>(T));
  for (int j = 1; j <= J; ++j) {
    if (unif(move_rng) < cfg.initial_offer_prob) offered[0].insert(j);
  }
  if (offered[0].empty()) offered[0].insert(1);

  std::vector<std::vector<int>> owned(static_cast<std::size_t>(F) + 1);
  for (const auto& ty : types) owned[static_cast<std::size_t>(ty.firm)].push_back(ty.id);

  std::vector<VehicleEvent> events;
  for (int t = 1; t < T; ++t) {
    offered[static_cast<std::size_t>(t)] = offered[static_cast<std::size_t>(t - 1)];
    auto& cur = offered[static_cast<std::size_t>(t)];
    const auto& prev = offered[static_cast<std::size_t>(t - 1)];
    for (int f = 1; f <= F; ++f) {
      if (unif(move_rng) >= cfg.move_prob) continue;
      std::vector<int> ins, outs;
      for (int j : owned[static_cast<std::size_t>(f)]) {
        (prev.count(j) ? outs : ins).push_back(j);
      }
      EventKind kind;
      if (!ins.empty() && !outs.empty()) {
        // Full portfolios shed products, thin ones add them, which keeps the
        // dilution cycle turning and yields both event kinds.
        const double p_exit = static_cast<double>(outs.size()) /
                              static_cast<double>(ins.size() + outs.size());
        kind = unif(move_rng) < p_exit ? EventKind::Exit : EventKind::Entry;
      } else if (!ins.empty()) {
        kind = EventKind::Entry;
      } else if (!outs.empty()) {
        kind = EventKind::Exit;
      } else {
        continue;
      }
      auto& cands = kind == EventKind::Entry ? ins : outs;
      std::uniform_int_distribution<std::size_t> pick(0, cands.size() - 1);
      const int j = cands[pick(move_rng)];
      if (kind == EventKind::Exit && cur.size() == 1 && cur.count(j)) {
        continue;  // never empty the whole market
      }
      std::vector<int> fprev;
      for (int p : owned[static_cast<std::size_t>(f)]) {
        if (prev.count(p)) fprev.push_back(p);
      }
      std::vector<int> j1 = fprev, j2 = fprev;
      if (kind == EventKind::Entry) {
        j1.push_back(j);
        std::sort(j1.begin(), j1.end());
      } else {
        j1.erase(std::remove(j1.begin(), j1.end(), j), j1.end());
      }
      const double margin = avg_margin(j1, j2, j, kind);
      const double slack =
          cfg.slack_lo + (cfg.slack_hi - cfg.slack_lo) * unif(move_rng);
      if (margin < slack) continue;
      VehicleEvent e;
      e.firm = f;
      e.period = t + 1;
      e.product = j;
      e.kind = kind;
      e.set_now = j1;
      e.set_prev = j2;
      events.push_back(e);
      if (kind == EventKind::Entry) {
        cur.insert(j);
      } else {
        cur.erase(j);
      }
    }
  }

  // Observable demand panel: offered rows only, shares from the full market
  // choice set, quantities rounded through the same division ingestion uses.
  DemandData demand;
  for (int t = 0; t < T; ++t) {
    DemandMarket mkt;
    mkt.market = t + 1;
    mkt.period = t + 1;
    std::vector<int> off(offered[static_cast<std::size_t>(t)].begin(),
                         offered[static_cast<std::size_t>(t)].end());
    const int m = static_cast<int>(off.size());
    Eigen::MatrixXd X(m, dX);
    Eigen::VectorXd p(m), z(m);
    for (int r = 0; r < m; ++r) {
      const int j = off[static_cast<std::size_t>(r)] - 1;
      X.row(r) = types[static_cast<std::size_t>(j)].x.transpose();
      p(r) = price(j, t);
      z(r) = zeta_true(j, t);
    }
    Eigen::MatrixXd shifts = het_shifts(draws, X, p);
    Eigen::VectorXd s = simulate_shares(z, shifts, draws.R);
    for (int r = 0; r < m; ++r) {
      const int j = off[static_cast<std::size_t>(r)];
      DemandObs o;
      o.market = t + 1;
      o.period = t + 1;
      o.firm = types[static_cast<std::size_t>(j - 1)].firm;
      o.product = j;
      o.x = types[static_cast<std::size_t>(j - 1)].x;
      o.price = p(r);
      o.mc = mc(j - 1, t);
      o.quantity = s(r) * msize(t);
      o.market_size = msize(t);
      o.share = o.quantity / o.market_size;
      o.z = Eigen::VectorXd::Constant(1, wins(j - 1, t));
      mkt.obs.push_back(std::move(o));
    }
    demand.markets.push_back(std::move(mkt));
  }

  Eigen::VectorXd delta_true(dX + 1);
  delta_true.head(dX) = beta;
  delta_true(dX) = alpha;
  SunkCostTheta theta_true;
  theta_true.lambda = lambda;
  theta_true.eta = eta;

  // Re-screen the kept events against the inference-side evaluation
  // (observed rows, inverted utilities, imputation), iterating to a fixed
  // point so the sample inequalities hold at the truth as the test will
  // actually evaluate them.
  invert_utilities(demand, draws);
  const double thr = cfg.slack_lo / 2.0;
  while (!events.empty()) {
    MarketDataset ds = make_market_dataset(demand, events, draws);
    VehicleMarketModel model(std::move(ds));
    MomentSystem sys = build_moment_rows(model, theta_true.flat(), delta_true);
    std::vector<VehicleEvent> keep;
    for (int l = 0; l < static_cast<int>(events.size()); ++l) {
      const double margin = -sys.values.row(l).mean();
      if (margin + 1e-12 >= thr) keep.push_back(events[static_cast<std::size_t>(l)]);
    }
    if (keep.size() == events.size()) break;
    events = std::move(keep);
  }

  SynthResult out;
  std::set<int> seen;
  for (const auto& mkt : demand.markets) {
    for (const auto& o : mkt.obs) seen.insert(o.product);
  }
  for (const auto& ty : types) {
    if (seen.count(ty.id)) out.types.push_back(ty);
  }
  out.demand = std::move(demand);
  out.events = std::move(events);
  out.delta_true = std::move(delta_true);
  out.theta_true = std::move(theta_true);
  out.draws = std::move(draws);
  return out;
}

}  // namespace sepmi
