#include "sepmi/mc.hpp"

#include <cmath>
#include <random>
#include <vector>

#include "sepmi/errors.hpp"
#include "sepmi/parallel.hpp"
#include "sepmi/qp.hpp"
#include "sepmi/rcc.hpp"
#include "sepmi/rng.hpp"
#include "sepmi/two_stage.hpp"

namespace sepmi {

void SizeStudyDesign::validate() const {
  const Eigen::Index d = A.cols();
  if (A.rows() == 0 || d == 0) throw ConfigInvalid("size design: empty A");
  if (rho.size() != A.rows())
    throw ConfigInvalid("size design: rho length != rows of A");
  if (mu.size() != d)
    throw ConfigInvalid("size design: mu length != columns of A");
  if (Sigma.rows() != d || Sigma.cols() != d)
    throw ConfigInvalid("size design: Sigma must be square of mu's dimension");
  if (A.cwiseAbs().maxCoeff() == 0.0)
    throw ConfigInvalid("size design: A is identically zero");
  if (!(n > 0.0) || !std::isfinite(n))
    throw ConfigInvalid("size design: n must be positive");
  if (reps < 100) throw ConfigInvalid("size design: reps < 100");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ConfigInvalid("size design: alpha must lie in (0, 1)");
  try {
    SpdMatrix probe(Sigma);
  } catch (const Error&) {
    throw ConfigInvalid("size design: Sigma is not symmetric positive definite");
  }
  const Eigen::VectorXd gap = A * mu - rho;
  switch (relation) {
    case MuRelation::Boundary:
      if (gap.cwiseAbs().maxCoeff() != 0.0)
        throw ConfigInvalid("size design: boundary requires A mu = rho exactly");
      break;
    case MuRelation::Interior:
      if (!(gap.maxCoeff() < 0.0))
        throw ConfigInvalid("size design: interior requires A mu < rho");
      break;
    case MuRelation::Violated:
      if (!(gap.maxCoeff() > 0.0))
        throw ConfigInvalid("size design: violated requires some A mu > rho");
      break;
  }
}

SizeStudyResult run_size_study(const SizeStudyDesign& design, int workers) {
  design.validate();
  const SpdMatrix Sigma(design.Sigma);
  const Eigen::MatrixXd L = Sigma.chol() / std::sqrt(design.n);
  const Eigen::Index d = design.mu.size();

  std::vector<signed char> outcome(static_cast<std::size_t>(design.reps), -1);
  const int ran = parallel_for(
      design.reps, workers > 0 ? workers : default_workers(), [&](int r) {
        std::mt19937_64 rng =
            make_rng(design.seed, static_cast<std::uint64_t>(r));
        std::normal_distribution<double> normal;
        Eigen::VectorXd z(d);
        for (Eigen::Index i = 0; i < d; ++i) z(i) = normal(rng);
        const Eigen::VectorXd pbar = design.mu + L * z;
        QpProblem problem(pbar, Sigma, design.A, design.rho, design.n);
        const QpSolution qp = solve_projection(problem);
        const RccResult rcc = rcc_decide(qp, design.A, design.rho, Sigma,
                                         design.n, design.alpha);
        outcome[static_cast<std::size_t>(r)] = rcc.reject ? 1 : 0;
      });

  SizeStudyResult out;
  for (signed char o : outcome)
    if (o >= 0) {
      out.reps++;
      out.rejected += o;
    }
  out.truncated = ran < design.reps;
  out.rejection_rate =
      out.reps > 0 ? static_cast<double>(out.rejected) / out.reps : 0.0;
  out.se = out.reps > 0 ? std::sqrt(out.rejection_rate *
                                    (1.0 - out.rejection_rate) / out.reps)
                        : 0.0;
  return out;
}

namespace {

enum RepOutcome : signed char {
  kNotRun = -1,
  kRejected = 0,
  kAccepted = 1,
  kDgpFail = 2,
  kFsFail = 3,
  kDecFail = 4,
};

}  // namespace

CoverageResult run_coverage_study(const CoverageConfig& config, int workers) {
  if (config.reps < 1) throw ConfigInvalid("coverage: reps < 1");
  if (!(config.alpha > 0.0 && config.alpha < 1.0))
    throw ConfigInvalid("coverage: alpha must lie in (0, 1)");

  EstimateOptions fs_opt = config.first_stage;
  fs_opt.with_influence = true;

  std::vector<signed char> outcome(static_cast<std::size_t>(config.reps),
                                   kNotRun);
  const int ran = parallel_for(
      config.reps, workers > 0 ? workers : default_workers(), [&](int r) {
        signed char& slot = outcome[static_cast<std::size_t>(r)];
        const std::uint64_t rep_seed =
            derive_seed(config.seed, static_cast<std::uint64_t>(r));
        SynthResult truth;
        try {
          truth = synth_dgp(config.dgp, rep_seed);
        } catch (const ConfigInvalid&) {
          throw;  // rep-independent: fail the whole study once
        } catch (const Error&) {
          slot = kDgpFail;
          return;
        }
        if (truth.events.size() < 2) {
          // one event cannot support the covariance estimate
          slot = kDgpFail;
          return;
        }

        FirstStageEstimate fs;
        try {
          const Eigen::MatrixXd weight;  // default (Z'Z/n)^{-1}
          const Eigen::VectorXd init =
              Eigen::VectorXd::Zero(truth.demand.dim_x() + 1);
          fs = estimate_demand(truth.demand, truth.draws, weight, init,
                               fs_opt);
        } catch (const Error&) {
          slot = kFsFail;
          return;
        }
        if (!fs.converged) {
          slot = kFsFail;
          return;
        }

        try {
          const MarketDataset data =
              make_market_dataset(truth.demand, truth.events, truth.draws);
          const VehicleMarketModel model(data);
          FirstStageEstimate fs_ev = fs;
          fs_ev.influence = event_influence(data, truth.demand, fs.influence);

          const Eigen::VectorXd theta = truth.theta_true.flat();
          const Eigen::MatrixXd A = constraint_matrix(model, theta);
          const Eigen::VectorXd rho = model.vec_rho(theta);
          const Eigen::VectorXd pbar = moment_pbar(model, theta, fs.delta_hat);
          const Eigen::MatrixXd P = jacobian_p_delta(model, theta, fs.delta_hat,
                                                     config.jacobian_step);
          SpdMatrix Sigma = corrected_covariance(model, theta, fs_ev, P);
          const double n = static_cast<double>(model.num_obs());
          QpProblem problem(pbar, std::move(Sigma), A, rho, n);
          const QpSolution qp = solve_projection(problem);
          const RccResult rcc =
              rcc_decide(qp, A, rho, problem.Sigma, n, config.alpha);
          slot = rcc.reject ? kRejected : kAccepted;
        } catch (const Error&) {
          slot = kDecFail;
        }
      });

  CoverageResult out;
  out.reps = config.reps;
  for (signed char o : outcome) {
    switch (o) {
      case kAccepted:
        out.accepted++;
        out.completed++;
        break;
      case kRejected:
        out.completed++;
        break;
      case kDgpFail:
        out.dgp_failures++;
        break;
      case kFsFail:
        out.first_stage_failures++;
        break;
      case kDecFail:
        out.decision_failures++;
        break;
      default:
        break;
    }
  }
  out.truncated = ran < config.reps;
  out.coverage_rate =
      out.completed > 0 ? static_cast<double>(out.accepted) / out.completed
                        : 0.0;
  out.se_defined = out.completed >= 2;
  out.se = out.se_defined
               ? std::sqrt(out.coverage_rate * (1.0 - out.coverage_rate) /
                           out.completed)
               : 0.0;
  return out;
}

}  // namespace sepmi
