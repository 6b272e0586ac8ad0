#pragma once

#include <map>
#include <memory>
#include <string>

#include "snpla/io.hpp"
#include "snpla/metrics.hpp"
#include "snpla/models.hpp"

namespace snpla::experiments {

/// Everything a run needs besides the method config: the simulator, the
/// observed data, and the per-round metric evaluator (KL-to-analytic for
/// the Gaussian model, W1 + mode coverage for two-moons, neg-log-pdf at
/// the ground truth for Lotka-Volterra).
struct ExperimentSetup {
  models::SimulatorSpec sim;
  Eigen::VectorXd x_obs;
  std::function<std::map<std::string, double>(const ad::Matrix& posterior_samples)>
      eval;
  /// Primary scalar used for sweeps / cross-method comparison.
  std::string primary_metric;

  std::optional<metrics::GaussianSummary> analytic;  // mvg_* only
  ad::Matrix reference_samples;                      // two_moons only
  std::shared_ptr<models::PilotStandardizer> standardizer;  // lotka_volterra only
  ad::Matrix observed_raw;  // mvg raw n x 2 data
};

/// Builds the simulator, draws/fixes x_obs from cfg.data_seed, and wires
/// the metric evaluator. Pilot standardization (LV) happens here.
ExperimentSetup make_experiment(const io::ExperimentConfig& cfg);

/// Conjugate posterior from the sufficient statistics (n, sample mean);
/// equivalent to models::mvg_analytic_posterior on the raw data.
models::GaussianPosterior mvg_posterior_from_stats(int n, const Eigen::Vector2d& xbar);

}  // namespace snpla::experiments
