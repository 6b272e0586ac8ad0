#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "snpla/flows.hpp"
#include "snpla/models.hpp"
#include "snpla/rng.hpp"

namespace snpla::inference {

using ad::Matrix;

struct TrainOptions {
  int batch_size = 50;
  int patience = 20;       // epochs without validation improvement
  double min_delta = 1e-4;
  int max_epochs = 300;
  double clip_norm = 0.0;  // 0 = no gradient clipping
};

struct TrainResult {
  std::vector<double> train_losses;  // per epoch
  std::vector<double> val_losses;
  int best_epoch = -1;
  bool degraded = false;  // NaN hit; best weights restored
};

/// Adam + forward-KL over shuffled mini-batches with validation-based early
/// stopping; restores the best-validation weights. Passing an optimizer
/// keeps its moments across calls (warm restarts between rounds).
TrainResult train_density_model(flow::ConditionalFlow& flow, const Matrix& contexts,
                                const Matrix& targets, double lr, double val_frac,
                                RngStream& rng, const TrainOptions& opts = {},
                                ad::Adam* optimizer = nullptr);

struct MixtureDraw {
  Matrix thetas;
  std::vector<char> from_prior;  // component label per draw
};

/// Draw n parameters from alpha * prior + (1 - alpha) * posterior_flow.
/// posterior_flow may be null when alpha == 1.
MixtureDraw proposal_mixture_sample(int n, double alpha, const models::Prior& prior,
                                    const flow::ConditionalFlow* posterior_flow,
                                    const Matrix& posterior_ctx, RngStream& rng);

struct SnplaConfig {
  int rounds = 10;
  int n_sim_per_round = 2500;  // N
  int n_post = 10000;          // N_P
  int n_mini = 1000;
  double lambda = 0.7;
  double lr_like = 0.001;
  double lr_post = 0.002;
  double gamma_post = 0.95;
  double val_frac = 0.1;
  std::uint64_t seed = 0;
  bool use_summary_net = false;
  int summary_dim = 5;
  int set_size = 5;  // elements per data set when use_summary_net
  int flow_layers = 5;
  std::vector<int> hidden = {50, 50};
  int n_test_post = 1000;
  TrainOptions train;
  int step2_patience = 10;  // consecutive mini-batches without val improvement

  void validate() const;
};

struct RoundRecord {
  int round = 0;
  double alpha = 1.0;
  long dataset_size = 0;
  std::vector<double> like_train_losses, like_val_losses;
  std::vector<double> post_loss_trace;  // step-2 training losses
  std::vector<double> post_val_trace;   // fixed-noise validation losses
  Matrix posterior_samples;             // n_test_post x theta_dim
  double t_simulate = 0, t_train_like = 0, t_train_post = 0, t_sample = 0;
  std::map<std::string, double> metrics;
  bool degraded = false;
  bool failed = false;
};

struct SnplaResult {
  std::unique_ptr<flow::ConditionalFlow> likelihood_flow;
  std::unique_ptr<flow::ConditionalFlow> posterior_flow;
  std::unique_ptr<models::DeepSetsNet> summary_net;
  std::vector<RoundRecord> rounds;
  long simulator_calls = 0;
  Matrix dataset_thetas, dataset_xs;  // cumulative training pairs
};

/// Sequential joint posterior/likelihood learning. Per round: (1) simulate
/// from the prior/posterior mixture and update the likelihood flow by
/// forward KL on the cumulative set; (2', round 1) hot-start the posterior
/// flow by forward KL on the prior-predictive pairs; (2) simulation-on-the-
/// fly reverse-KL updates of the posterior flow with per-round
/// exponentially decayed learning rate.
SnplaResult snpla_run(const SnplaConfig& cfg, const models::SimulatorSpec& sim,
                      const Eigen::VectorXd& x_obs);

struct McmcConfig {
  int n_chains = 4;
  int burn_in = 500;
  int thinning = 1;
  double initial_scale = 0.5;
};

struct McmcStats {
  double acceptance_rate = 0.0;
  double final_scale = 0.0;
};

/// Adaptive random-walk Metropolis; the proposal scale adapts during
/// burn-in toward acceptance 0.234. `log_density` evaluates a batch of
/// positions (one per row) and may return -inf outside the support.
Matrix mcmc_sample(const std::function<Eigen::VectorXd(const Matrix&)>& log_density,
                   int dim, int n, const McmcConfig& cfg, const Eigen::VectorXd& init,
                   RngStream& rng, McmcStats* stats = nullptr);

/// Smallest thinning factor t (from {1,2,5,10,20,50}) such that the lag-t
/// autocorrelation of every coordinate of a pilot chain drops below 0.1.
/// Used by the run-time comparison so that "1000 thinned MCMC draws" are
/// effectively independent, like the flow's i.i.d. draws.
int decorrelation_thinning(
    const std::function<Eigen::VectorXd(const Matrix&)>& log_density, int dim,
    const Eigen::VectorXd& init, RngStream& rng, int pilot_draws = 2000);

struct SnlConfig {
  int rounds = 10;
  int n_sim_per_round = 2500;
  double lr = 0.0005;
  double val_frac = 0.1;
  std::uint64_t seed = 0;
  int flow_layers = 5;
  std::vector<int> hidden = {50, 50};
  int n_test_post = 1000;
  TrainOptions train;
  McmcConfig mcmc;
};

struct SnlResult {
  std::unique_ptr<flow::ConditionalFlow> likelihood_flow;
  std::vector<RoundRecord> rounds;
  long simulator_calls = 0;
};

/// Sequential neural likelihood: per round, MCMC on the learned synthetic
/// posterior log p_L(x_obs | theta) + log p(theta) proposes the next
/// simulation batch (round 1 uses the prior).
SnlResult snl_run(const SnlConfig& cfg, const models::SimulatorSpec& sim,
                  const Eigen::VectorXd& x_obs);

struct SmcAbcConfig {
  int n_particles = 1000;
  long max_sims = 25000;
  double epsilon_quantile = 0.5;
  std::uint64_t seed = 0;
};

struct AbcGeneration {
  Matrix particles;
  Eigen::VectorXd weights;  // sum to 1
  double epsilon = 0.0;
  long sims_used = 0;
};

/// Population Monte Carlo ABC with a Gaussian perturbation kernel (twice
/// the weighted empirical covariance) and a quantile-based epsilon ladder.
std::vector<AbcGeneration> smcabc_run(const models::Prior& prior,
                                      const models::SimulatorSpec& sim,
                                      const Eigen::VectorXd& x_obs,
                                      const SmcAbcConfig& cfg);

}  // namespace snpla::inference
