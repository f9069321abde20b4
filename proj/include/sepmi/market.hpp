#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <vector>

#include "sepmi/demand.hpp"
#include "sepmi/two_stage.hpp"

namespace sepmi {

// One vehicle type: fixed characteristics and the firm that owns the line.
struct ProductType {
  int id = 0;
  int firm = 0;
  Eigen::VectorXd x;
};

enum class EventKind { Entry, Exit };

// A product introduction or discontinuation: firm f changes its set between
// J_{f,t-1} (set_prev) and J_{f,t} (set_now) by exactly the product j.
struct VehicleEvent {
  int firm = 0;
  int period = 0;
  int product = 0;
  EventKind kind = EventKind::Entry;
  std::vector<int> set_now;
  std::vector<int> set_prev;
};

// Observed snapshot of one period: offered products with price, marginal
// cost, and (post-inversion) mean utility keyed by product id.
struct MarketState {
  int period = 0;
  double market_size = 0.0;
  std::vector<int> offered;
  std::map<int, double> price;
  std::map<int, double> mc;
  std::map<int, double> zeta;
};

struct MarketDataset {
  std::vector<ProductType> types;   // sorted by id
  std::vector<MarketState> states;  // sorted by period
  std::vector<VehicleEvent> events;
  Draws draws;  // simulation draws shared with the demand stage

  int dim_x() const;
  const ProductType& type_of(int product) const;  // UnknownProduct
  const MarketState& state_at(int period) const;  // ConfigInvalid
};

// theta = (lambda, eta): salvage fraction and sunk-cost loadings on x.
struct SunkCostTheta {
  double lambda = 0.0;
  Eigen::VectorXd eta;
  Eigen::VectorXd flat() const;
  static SunkCostTheta from_flat(const Eigen::VectorXd& v);
};

// Entry/exit moment system over events:
//   entry:  E[dpi(J_{f,t}, J_{f,t}\j) - x_j'eta]        >= 0
//   exit:   E[dpi(J_{f,t}, J_{f,t} u j) + lambda x_j'eta] >= 0
// mapped to B(theta) M - C N <= rho with M the stacked type characteristics,
// N_l(W_i) the l-th profit comparison evaluated at observation i's period
// state, B rows eta' (entry) / -lambda eta' (exit) in the product block,
// C = I_k, rho = 0.  Each event is one observation, so n = k.
class VehicleMarketModel : public MomentModel {
 public:
  explicit VehicleMarketModel(MarketDataset data);  // EmptyEvents

  int num_obs() const override;
  int dim_m() const override;
  int dim_n() const override;
  Eigen::MatrixXd mat_b(const Eigen::VectorXd& theta) const override;
  Eigen::MatrixXd mat_c(const Eigen::VectorXd& theta) const override;
  Eigen::VectorXd vec_rho(const Eigen::VectorXd& theta) const override;
  Eigen::VectorXd moment_m(int i, const Eigen::VectorXd& theta) const override;
  Eigen::VectorXd moment_n(int i, const Eigen::VectorXd& theta,
                           const Eigen::VectorXd& delta) const override;

  const MarketDataset& data() const { return data_; }

  // dpi = sum_{j in J1}(p_j - mc_j) M s_j(J1) - sum_{j in J2}(...) s_j(J2)
  // at one period's state; shares are simulated over the given choice set
  // only (removed products leave the denominator).  Products missing from
  // the state are imputed (see imputed_price); their mean utility is
  // x'beta - alpha p with the residual set to zero.
  double profit_delta(const MarketState& state, const std::vector<int>& j1,
                      const std::vector<int>& j2,
                      const Eigen::VectorXd& delta) const;

  // Price / marginal cost carried over from the nearest earlier (else
  // nearest later) period offering the product.
  double imputed_price(int product, int period) const;
  double imputed_mc(int product, int period) const;

 private:
  int type_index(int product) const;
  void check_theta(const Eigen::VectorXd& theta) const;

  MarketDataset data_;
  std::map<int, int> type_index_;  // product id -> position in types
};

// The stacked layout plus per-observation canonical rows
// values(l, i) = B_l M - N_l(W_i, delta), i.e. the <= 0 form of the
// entry/exit statements (>= 0 statements negated).
struct MomentSystem {
  Eigen::MatrixXd B;
  Eigen::MatrixXd C;
  Eigen::VectorXd rho;
  Eigen::MatrixXd values;  // k x n
};
MomentSystem build_moment_rows(const VehicleMarketModel& model,
                               const Eigen::VectorXd& theta,
                               const Eigen::VectorXd& delta);

// Per-event first-stage influence: each event borrows the psi of its own
// demand observation — (t, j) for an entry, (t-1, j) for an exit.
// demand_psi is ordered like the stacked demand rows.
std::vector<Eigen::VectorXd> event_influence(
    const MarketDataset& data, const DemandData& demand,
    const std::vector<Eigen::VectorXd>& demand_psi);

// Assembles period states and product types from inverted demand data,
// reconstructs the per-firm offered sets, and validates each event against
// them (entry: j newly offered; exit: j newly absent).
MarketDataset make_market_dataset(const DemandData& demand,
                                  const std::vector<VehicleEvent>& events,
                                  const Draws& draws);

// Synthetic vehicle-market generator with known truth.
struct DgpConfig {
  int num_products = 16;  // J <= 30
  int num_periods = 60;   // one market per period
  int num_firms = 4;
  int draws = 1;          // R simulation draws
  double sigma_beta = 0.0;   // common heterogeneity scale on all x
  double sigma_alpha = 0.0;  // heterogeneity scale on the price coefficient
  Eigen::VectorXd beta_true;  // defaults to (1.0, 0.4, -0.5, 0.3)
  double alpha_true = 0.7;
  double lambda_true = 0.7;
  Eigen::VectorXd eta_true;   // defaults set in synth_dgp
  double xi_sd = 0.0;         // sd of the structural residual (price-endogenous)
  double initial_offer_prob = 0.25;  // first-period offering probability
  double move_prob = 0.9;     // per firm-period chance of proposing a move
  double slack_lo = 0.0;      // structural slack band added to the screen
  double slack_hi = 0.0;
  double market_size_lo = 80.0;
  double market_size_hi = 120.0;
};

struct SynthResult {
  DemandData demand;               // offered rows only, utilities inverted
  std::vector<ProductType> types;  // every product that appears in demand
  std::vector<VehicleEvent> events;
  Eigen::VectorXd delta_true;      // (beta*, alpha*)
  SunkCostTheta theta_true;
  Draws draws;
};

// Generates a complete internal panel, proposes entry/exit moves screened at
// (theta*, delta*) with a structural-slack draw, then re-screens the kept
// events against the same evaluation the inference path will use (observed
// rows only, inverted utilities, imputation), iterated to a fixed point, so
// the sample inequalities hold at the truth.  Deterministic given the seed.
SynthResult synth_dgp(const DgpConfig& config, std::uint64_t seed);

}  // namespace sepmi
