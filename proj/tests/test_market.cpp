#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "sepmi/demand.hpp"
#include "sepmi/errors.hpp"
#include "sepmi/market.hpp"

using namespace sepmi;

namespace {

// Two products, two periods, no heterogeneity: shares are plain logit so
// every profit figure has a closed form.
MarketDataset hand_dataset() {
  MarketDataset ds;
  ds.draws = Draws::make(1, Eigen::VectorXd::Zero(2), 0.0, 1);

  ProductType p1;
  p1.id = 1;
  p1.firm = 1;
  p1.x.resize(2);
  p1.x << 1.0, 0.0;
  ProductType p2;
  p2.id = 2;
  p2.firm = 1;
  p2.x.resize(2);
  p2.x << 0.0, 1.0;
  ds.types = {p1, p2};

  MarketState s1;
  s1.period = 1;
  s1.market_size = 100.0;
  s1.offered = {1, 2};
  s1.price = {{1, 2.0}, {2, 1.5}};
  s1.mc = {{1, 1.2}, {2, 1.0}};
  s1.zeta = {{1, 0.5}, {2, 0.2}};

  MarketState s2;  // product 2 not offered; product 1 at zero margin
  s2.period = 2;
  s2.market_size = 80.0;
  s2.offered = {1};
  s2.price = {{1, 1.2}};
  s2.mc = {{1, 1.2}};
  s2.zeta = {{1, 0.3}};
  ds.states = {s1, s2};

  VehicleEvent entry;
  entry.firm = 1;
  entry.period = 1;
  entry.product = 1;
  entry.kind = EventKind::Entry;
  entry.set_now = {1, 2};
  entry.set_prev = {2};

  VehicleEvent exit;
  exit.firm = 1;
  exit.period = 2;
  exit.product = 2;
  exit.kind = EventKind::Exit;
  exit.set_now = {1};
  exit.set_prev = {1, 2};
  ds.events = {entry, exit};
  return ds;
}

Eigen::VectorXd make_delta(double b1, double b2, double a) {
  Eigen::VectorXd d(3);
  d << b1, b2, a;
  return d;
}

// Demand panel over periods {1, 2} whose utilities are already filled in,
// for the dataset-assembly and influence-remap tests.
DemandData two_period_demand(bool drop_product2_in_period2) {
  DemandData data;
  for (int t = 1; t <= 2; ++t) {
    DemandMarket mkt;
    mkt.market = t;
    mkt.period = t;
    const int nj = (t == 2 && drop_product2_in_period2) ? 1 : 2;
    mkt.zeta.resize(nj);
    for (int j = 1; j <= nj; ++j) {
      DemandObs o;
      o.market = t;
      o.period = t;
      o.firm = 1;
      o.product = j;
      o.x.resize(2);
      o.x << (j == 1 ? 1.0 : 0.0), (j == 1 ? 0.0 : 1.0);
      o.price = 1.0 + 0.5 * j;
      o.mc = 0.8 + 0.3 * j;
      o.z.resize(0);
      o.market_size = 100.0;
      o.share = 0.2;
      o.quantity = 20.0;
      mkt.zeta(j - 1) = 0.1 * t + 0.2 * j;
      mkt.obs.push_back(std::move(o));
    }
    data.markets.push_back(std::move(mkt));
  }
  return data;
}

}  // namespace

TEST_CASE("profit_delta: identical sets and zero margins") {
  const VehicleMarketModel model(hand_dataset());
  const Eigen::VectorXd delta = make_delta(1.0, 0.4, 0.5);
  const MarketState& s1 = model.data().state_at(1);
  const MarketState& s2 = model.data().state_at(2);

  CHECK(model.profit_delta(s1, {1, 2}, {1, 2}, delta) == 0.0);
  CHECK(model.profit_delta(s1, {}, {}, delta) == 0.0);
  // Price equals marginal cost: supplying the product earns nothing.
  CHECK(model.profit_delta(s2, {1}, {}, delta) == 0.0);
}

TEST_CASE("profit_delta: closed-form logit fixture") {
  const VehicleMarketModel model(hand_dataset());
  const Eigen::VectorXd delta = make_delta(1.0, 0.4, 0.5);
  const MarketState& s1 = model.data().state_at(1);

  const double e1 = std::exp(0.5);
  const double e2 = std::exp(0.2);
  const double pi_both =
      100.0 * ((2.0 - 1.2) * e1 + (1.5 - 1.0) * e2) / (1.0 + e1 + e2);
  const double pi_two = 100.0 * (1.5 - 1.0) * e2 / (1.0 + e2);
  CHECK(model.profit_delta(s1, {1, 2}, {2}, delta) ==
        doctest::Approx(pi_both - pi_two).epsilon(1e-9));

  // Antisymmetry is exact: both orders subtract the same two profits.
  const double fwd = model.profit_delta(s1, {1, 2}, {2}, delta);
  const double rev = model.profit_delta(s1, {2}, {1, 2}, delta);
  CHECK(fwd == -rev);
}

TEST_CASE("profit_delta: missing products are imputed") {
  const VehicleMarketModel model(hand_dataset());
  const Eigen::VectorXd delta = make_delta(1.0, 0.4, 0.5);

  // Product 2 is absent in period 2: price/mc carry over from period 1 and
  // its mean utility is rebuilt as x'beta - alpha * price.
  CHECK(model.imputed_price(2, 2) == 1.5);
  CHECK(model.imputed_mc(2, 2) == 1.0);
  // Carry-back from the nearest later period when nothing earlier exists.
  CHECK(model.imputed_price(2, 0) == 1.5);

  const MarketState& s2 = model.data().state_at(2);
  const double zeta_imp = 0.4 - 0.5 * 1.5;
  const double e1 = std::exp(0.3);
  const double e2 = std::exp(zeta_imp);
  const double pi_both =
      80.0 * ((1.2 - 1.2) * e1 + (1.5 - 1.0) * e2) / (1.0 + e1 + e2);
  CHECK(model.profit_delta(s2, {1, 2}, {1}, delta) ==
        doctest::Approx(pi_both).epsilon(1e-9));
}

TEST_CASE("profit_delta: argument validation") {
  const VehicleMarketModel model(hand_dataset());
  const MarketState& s1 = model.data().state_at(1);
  CHECK_THROWS_AS(model.profit_delta(s1, {1}, {}, Eigen::VectorXd::Zero(2)),
                  ShapeMismatch);
  Eigen::VectorXd nan_delta = make_delta(1.0, 0.4, 0.5);
  nan_delta(0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(model.profit_delta(s1, {1}, {}, nan_delta), ConfigInvalid);
}

TEST_CASE("moment system: stacked layout for one entry and one exit") {
  const VehicleMarketModel model(hand_dataset());
  CHECK(model.num_obs() == 2);
  CHECK(model.dim_m() == 4);
  CHECK(model.dim_n() == 2);

  Eigen::VectorXd theta(3);
  theta << 0.7, 2.0, 3.0;
  const Eigen::VectorXd delta = make_delta(1.0, 0.4, 0.5);
  const MomentSystem sys = build_moment_rows(model, theta, delta);

  // Entry row carries eta' in the entrant's block, exit row -lambda eta'.
  Eigen::MatrixXd expect_b(2, 4);
  expect_b << 2.0, 3.0, 0.0, 0.0, 0.0, 0.0, -0.7 * 2.0, -0.7 * 3.0;
  CHECK((sys.B - expect_b).cwiseAbs().maxCoeff() == 0.0);
  CHECK((sys.C - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK(sys.rho.cwiseAbs().maxCoeff() == 0.0);

  // M stacks the type characteristics in id order.
  const Eigen::VectorXd m = model.moment_m(0, theta);
  Eigen::VectorXd expect_m(4);
  expect_m << 1.0, 0.0, 0.0, 1.0;
  CHECK((m - expect_m).cwiseAbs().maxCoeff() == 0.0);

  // values(l, i) = B_l M - N_l(W_i): check against profit_delta directly.
  const MarketState& s1 = model.data().state_at(1);
  const MarketState& s2 = model.data().state_at(2);
  const double n00 = model.profit_delta(s1, {1, 2}, {2}, delta);
  const double n10 = model.profit_delta(s1, {1}, {1, 2}, delta);
  const double n01 = model.profit_delta(s2, {1, 2}, {2}, delta);
  const double n11 = model.profit_delta(s2, {1}, {1, 2}, delta);
  CHECK(sys.values(0, 0) == doctest::Approx(2.0 - n00).epsilon(1e-12));
  CHECK(sys.values(1, 0) ==
        doctest::Approx(-0.7 * 3.0 - n10).epsilon(1e-12));
  CHECK(sys.values(0, 1) == doctest::Approx(2.0 - n01).epsilon(1e-12));
  CHECK(sys.values(1, 1) ==
        doctest::Approx(-0.7 * 3.0 - n11).epsilon(1e-12));
}

TEST_CASE("moment system: structure in lambda and eta") {
  const VehicleMarketModel model(hand_dataset());
  Eigen::VectorXd theta(3);
  theta << 0.7, 2.0, 3.0;

  // Zero salvage value wipes the exit row entirely.
  Eigen::VectorXd no_salvage = theta;
  no_salvage(0) = 0.0;
  const Eigen::MatrixXd b0 = model.mat_b(no_salvage);
  CHECK(b0.row(1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(b0.row(0).cwiseAbs().maxCoeff() > 0.0);

  // B is linear in eta at fixed lambda.
  Eigen::VectorXd doubled = theta;
  doubled.tail(2) *= 2.0;
  CHECK((model.mat_b(doubled) - 2.0 * model.mat_b(theta))
            .cwiseAbs()
            .maxCoeff() == 0.0);

  // Zero sunk costs make B vanish and leave values = -N.
  Eigen::VectorXd free_entry(3);
  free_entry << 0.7, 0.0, 0.0;
  const Eigen::VectorXd delta = make_delta(1.0, 0.4, 0.5);
  const MomentSystem sys = build_moment_rows(model, free_entry, delta);
  CHECK(sys.B.cwiseAbs().maxCoeff() == 0.0);
  const MarketState& s1 = model.data().state_at(1);
  CHECK(sys.values(0, 0) ==
        doctest::Approx(-model.profit_delta(s1, {1, 2}, {2}, delta))
            .epsilon(1e-12));
}

TEST_CASE("moment system: theta validation") {
  const VehicleMarketModel model(hand_dataset());
  CHECK_THROWS_AS(model.mat_b(Eigen::VectorXd::Zero(2)), ShapeMismatch);
  Eigen::VectorXd nan_theta(3);
  nan_theta << 0.5, std::numeric_limits<double>::quiet_NaN(), 1.0;
  CHECK_THROWS_AS(model.vec_rho(nan_theta), ConfigInvalid);
}

TEST_CASE("VehicleMarketModel: constructor validation") {
  MarketDataset no_events = hand_dataset();
  no_events.events.clear();
  CHECK_THROWS_AS(VehicleMarketModel{no_events}, EmptyEvents);

  MarketDataset stray = hand_dataset();
  stray.events[0].product = 9;
  CHECK_THROWS_AS(VehicleMarketModel{stray}, UnknownProduct);

  CHECK_THROWS_AS(hand_dataset().type_of(99), UnknownProduct);
  CHECK_THROWS_AS(hand_dataset().state_at(7), ConfigInvalid);
}

TEST_CASE("make_market_dataset: assembles states and validates events") {
  const DemandData demand = two_period_demand(true);

  VehicleEvent exit;
  exit.firm = 1;
  exit.period = 2;
  exit.product = 2;
  exit.kind = EventKind::Exit;
  const Draws draws = Draws::make(1, Eigen::VectorXd::Zero(2), 0.0, 1);
  const MarketDataset ds = make_market_dataset(demand, {exit}, draws);

  REQUIRE(ds.types.size() == 2);
  CHECK(ds.types[0].id == 1);
  CHECK(ds.types[1].id == 2);
  REQUIRE(ds.states.size() == 2);
  CHECK(ds.states[0].offered == std::vector<int>{1, 2});
  CHECK(ds.states[1].offered == std::vector<int>{1});
  CHECK(ds.states[0].zeta.at(2) == doctest::Approx(0.5).epsilon(1e-15));
  REQUIRE(ds.events.size() == 1);
  // Offered sets are reconstructed from the demand rows, not taken on trust.
  CHECK(ds.events[0].set_prev == std::vector<int>{1, 2});
  CHECK(ds.events[0].set_now == std::vector<int>{1});

  // An entry claim for the same move contradicts the offered sets.
  VehicleEvent bogus = exit;
  bogus.kind = EventKind::Entry;
  CHECK_THROWS_AS(make_market_dataset(demand, {bogus}, draws), SchemaInvalid);

  VehicleEvent unknown = exit;
  unknown.product = 5;
  CHECK_THROWS_AS(make_market_dataset(demand, {unknown}, draws),
                  UnknownProduct);

  VehicleEvent wrong_firm = exit;
  wrong_firm.firm = 3;
  CHECK_THROWS_AS(make_market_dataset(demand, {wrong_firm}, draws),
                  SchemaInvalid);

  VehicleEvent no_prev = exit;
  no_prev.period = 1;  // period 0 has no demand data
  CHECK_THROWS_AS(make_market_dataset(demand, {no_prev}, draws),
                  SchemaInvalid);

  DemandData uninverted = two_period_demand(true);
  uninverted.markets[0].zeta.resize(0);
  CHECK_THROWS_AS(make_market_dataset(uninverted, {exit}, draws),
                  ConfigInvalid);
}

TEST_CASE("event_influence: events borrow their own observation's value") {
  const DemandData demand = two_period_demand(false);
  // Row order: (period 1, product 1) = 0, (1,2) = 1, (2,1) = 2, (2,2) = 3.
  std::vector<Eigen::VectorXd> psi;
  for (int i = 0; i < 4; ++i) {
    psi.push_back(Eigen::VectorXd::Constant(3, static_cast<double>(i)));
  }

  MarketDataset ds;
  VehicleEvent entry;
  entry.firm = 1;
  entry.period = 2;
  entry.product = 1;
  entry.kind = EventKind::Entry;
  VehicleEvent exit;
  exit.firm = 1;
  exit.period = 2;
  exit.product = 2;
  exit.kind = EventKind::Exit;
  ds.events = {entry, exit};

  const auto out = event_influence(ds, demand, psi);
  REQUIRE(out.size() == 2);
  CHECK(out[0](0) == 2.0);  // entry reads (t, j)
  CHECK(out[1](0) == 1.0);  // exit reads (t-1, j)

  CHECK_THROWS_AS(
      event_influence(ds, demand, {psi.begin(), psi.begin() + 3}),
      ShapeMismatch);

  MarketDataset off_panel = ds;
  off_panel.events[0].period = 3;  // no demand rows in period 3
  CHECK_THROWS_AS(event_influence(off_panel, demand, psi), SchemaInvalid);
}

TEST_CASE("synth_dgp: deterministic and correctly sized") {
  DgpConfig cfg;
  const SynthResult a = synth_dgp(cfg, 1);
  const SynthResult b = synth_dgp(cfg, 1);

  CHECK(a.events.size() == 11);
  CHECK(a.demand.total_obs() == 473);
  CHECK(a.delta_true.size() == 5);
  CHECK(a.theta_true.eta.size() == 4);
  CHECK((a.delta_true - b.delta_true).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(a.events.size() == b.events.size());
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    CHECK(a.events[i].product == b.events[i].product);
    CHECK(a.events[i].period == b.events[i].period);
    CHECK(a.events[i].kind == b.events[i].kind);
  }
  REQUIRE(a.demand.markets.size() == b.demand.markets.size());
  for (std::size_t m = 0; m < a.demand.markets.size(); ++m) {
    CHECK((a.demand.markets[m].zeta - b.demand.markets[m].zeta)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }

  // A different seed moves the sample.
  const SynthResult c = synth_dgp(cfg, 2);
  const bool differs = c.events.size() != a.events.size() ||
                       c.demand.total_obs() != a.demand.total_obs();
  CHECK(differs);
}

TEST_CASE("synth_dgp: sample inequalities hold at the truth") {
  DgpConfig cfg;
  const SynthResult truth = synth_dgp(cfg, 1);
  const MarketDataset ds =
      make_market_dataset(truth.demand, truth.events, truth.draws);
  const VehicleMarketModel model(ds);
  const MomentSystem sys =
      build_moment_rows(model, truth.theta_true.flat(), truth.delta_true);
  // Every screened event satisfies its own inequality on sample average.
  const Eigen::VectorXd means = sys.values.rowwise().mean();
  CHECK(means.maxCoeff() <= 1e-9);
}

TEST_CASE("synth_dgp: frozen market produces no events") {
  DgpConfig cfg;
  cfg.move_prob = 0.0;
  const SynthResult still = synth_dgp(cfg, 1);
  CHECK(still.events.empty());
  CHECK(still.demand.total_obs() > 0);
}

TEST_CASE("synth_dgp: config validation names the offending field") {
  DgpConfig cfg;
  cfg.lambda_true = 1.5;
  CHECK_THROWS_WITH_AS(synth_dgp(cfg, 1), "dgp config: invalid lambda_true",
                       ConfigInvalid);

  DgpConfig neg;
  neg.xi_sd = -0.1;
  CHECK_THROWS_AS(synth_dgp(neg, 1), ConfigInvalid);

  DgpConfig wide;
  wide.num_products = 31;
  CHECK_THROWS_AS(synth_dgp(wide, 1), ConfigInvalid);

  DgpConfig slack;
  slack.slack_lo = 1.0;
  slack.slack_hi = 0.5;
  CHECK_THROWS_AS(synth_dgp(slack, 1), ConfigInvalid);
}
