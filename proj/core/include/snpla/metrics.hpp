#pragma once

#include <functional>
#include <vector>

#include "snpla/models.hpp"
#include "snpla/rng.hpp"

namespace snpla::metrics {

using ad::Matrix;

struct GaussianSummary {
  Eigen::VectorXd mean;
  Matrix cov;  // symmetric, PSD-clamped
  long n_samples = 0;
};

/// Sample mean and unbiased (n-1) covariance, symmetrized and eigenvalue-
/// clamped to PSD. Requires n >= d + 2.
GaussianSummary fit_gaussian(const Matrix& samples);

/// KL(N(m1,S1) || N(m2,S2)). Throws on singular S2.
double gaussian_kl(const Eigen::VectorXd& m1, const Matrix& S1,
                   const Eigen::VectorXd& m2, const Matrix& S2);

/// Fit a Gaussian to the samples and return KL(analytic || fitted).
/// Degenerate sample covariances get one 1e-8*I jitter retry.
double kl_to_analytic(const Matrix& samples, const GaussianSummary& analytic);

/// Exact W1 between equal-size empirical measures: minimum-cost perfect
/// matching under the Euclidean ground cost, divided by n. n <= 2000.
double wasserstein1(const Matrix& a, const Matrix& b);

/// -log N(theta_star; m, S) for the Gaussian fitted to the samples.
double neg_log_pdf_at_truth(const Matrix& samples, const Eigen::VectorXd& theta_star);

struct SbcResult {
  Matrix histograms;               // theta_dim x (L+1), each row sums to K - skipped
  std::vector<double> chi2_stat;   // per parameter
  std::vector<double> p_value;     // per parameter
  long band_lower = 0;             // 99% central Binomial(K_eff, 1/(L+1)) band
  long band_upper = 0;
  int replicates = 0;
  int skipped = 0;
};

/// Simulation-based calibration: K replicates of theta ~ prior,
/// x ~ simulator(theta), L posterior draws from the inference runner, and
/// the per-coordinate rank of theta among them. A replicate whose runner
/// throws is skipped and counted; > 20% failures aborts.
SbcResult sbc(
    const std::function<Matrix(const Eigen::VectorXd& x_obs, int n_draws,
                               RngStream& rng)>& inference_runner,
    const models::Prior& prior,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&, RngStream&)>& simulate,
    int replicates, int draws_per_replicate, RngStream& rng);

/// Fraction of two-moons posterior samples in each reflection mode. The
/// modes are mirror images under (t1,t2) -> (-t2,-t1) and are separated by
/// the sign of t1 + t2; ties go by the sign of t1.
std::pair<double, double> mode_coverage(const Matrix& samples);

}  // namespace snpla::metrics
