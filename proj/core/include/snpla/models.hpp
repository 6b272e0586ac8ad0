#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "snpla/autodiff.hpp"
#include "snpla/rng.hpp"

namespace snpla::models {

using ad::Matrix;
using ad::Var;

class BoxUniformPrior {
 public:
  BoxUniformPrior(Eigen::VectorXd lower, Eigen::VectorXd upper);
  Eigen::VectorXd sample(RngStream& rng) const;
  double log_prob(const Eigen::VectorXd& theta) const;  // -inf outside
  bool in_support(const Eigen::VectorXd& theta) const;
  int dim() const { return static_cast<int>(lower_.size()); }
  const Eigen::VectorXd& lower() const { return lower_; }
  const Eigen::VectorXd& upper() const { return upper_; }
  double log_density_inside() const { return log_inside_; }

 private:
  Eigen::VectorXd lower_, upper_;
  double log_inside_;
};

class GaussianPrior {
 public:
  GaussianPrior(Eigen::VectorXd mean, Matrix cov);
  Eigen::VectorXd sample(RngStream& rng) const;
  double log_prob(const Eigen::VectorXd& theta) const;
  /// Differentiable log density for a batch of parameter rows (N x d).
  Var log_prob_var(const Var& theta) const;
  int dim() const { return static_cast<int>(mean_.size()); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }

 private:
  Eigen::VectorXd mean_;
  Matrix cov_, cov_inv_, chol_;
  double log_norm_;
};

/// Box-uniform or Gaussian prior behind one interface.
class Prior {
 public:
  explicit Prior(BoxUniformPrior p) : box_(std::move(p)) {}
  explicit Prior(GaussianPrior p) : gauss_(std::move(p)) {}

  bool is_box() const { return box_.has_value(); }
  const BoxUniformPrior& box() const { return *box_; }
  const GaussianPrior& gaussian() const { return *gauss_; }

  int dim() const { return box_ ? box_->dim() : gauss_->dim(); }
  Eigen::VectorXd sample(RngStream& rng) const;
  double log_prob(const Eigen::VectorXd& theta) const;
  /// Differentiable batch log density for the reverse-KL loss. For a box
  /// prior this is a constant (the posterior flow's sigmoid box keeps
  /// samples inside the support).
  std::function<Var(const Var&)> log_prob_fn() const;

 private:
  std::optional<BoxUniformPrior> box_;
  std::optional<GaussianPrior> gauss_;
};

// ---------------------------------------------------------------------------
// Conjugate MV Gaussian benchmark

/// Fixed data covariance of the MV Gaussian model.
Matrix mvg_sigma();
/// Prior N([0,0], 5*I) over the mean.
GaussianPrior mvg_prior();

/// n_obs i.i.d. draws from N(mu, mvg_sigma()), one per row.
Matrix mvg_simulate(const Eigen::Vector2d& mu, int n_obs, RngStream& rng);

/// [mean1, mean2, var1, var2, cov12] with the unbiased (n-1) normalization.
Eigen::VectorXd mvg_summary_stats(const Matrix& data);

struct GaussianPosterior {
  Eigen::Vector2d mean;
  Eigen::Matrix2d cov;
};
/// Exact conjugate posterior over the mean; n = 0 returns the prior.
GaussianPosterior mvg_analytic_posterior(const Matrix& x_obs);

// ---------------------------------------------------------------------------
// Two-moons benchmark

struct TwoMoonsConfig {
  /// true: p = (r cos(a) + 1, r sin(a)); false: literal p = (cos(a) + 1, r sin(a)).
  bool radial_first = true;
};

Eigen::Vector2d two_moons_simulate(const Eigen::Vector2d& theta, RngStream& rng,
                                   const TwoMoonsConfig& cfg = {});

/// Rejection sampler against x_obs = [0,0]: accept |x|_2 < eps. Stands in
/// for the analytic posterior in the Wasserstein comparisons.
Matrix two_moons_reference_sample(int n, RngStream& rng, double eps = 0.01,
                                  const TwoMoonsConfig& cfg = {});

// ---------------------------------------------------------------------------
// Lotka-Volterra Markov-jump benchmark

struct LvPath {
  Eigen::VectorXd predators;  // X, recorded on the grid
  Eigen::VectorXd prey;       // Y
  long events = 0;
  bool truncated = false;  // hit the 10,000-event cap; tail zero-filled
};

inline constexpr int kLvGridPoints = 151;  // horizon 30, step 0.2
inline constexpr long kLvMaxEvents = 10000;

/// Gillespie simulation of the four-reaction predator-prey system:
///   X -> X+1 at exp(t1)*X*Y,  X -> X-1 at exp(t2)*X,
///   Y -> Y+1 at exp(t3)*Y,    Y -> Y-1 at exp(t4)*X*Y,
/// from X=50, Y=100. After kLvMaxEvents steps the rest of the recording
/// grid is zero-filled.
LvPath lv_gillespie_simulate(const Eigen::Vector4d& theta, RngStream& rng);

inline Eigen::Vector4d lv_theta_gt() {
  return {std::log(0.01), std::log(0.5), std::log(1.0), std::log(0.01)};
}

/// [mean_X, mean_Y, logvar_X, logvar_Y, ac1_X, ac2_X, ac1_Y, ac2_Y, cc_XY].
/// Zero-variance series get correlations 0 and logvar log(1e-10).
Eigen::VectorXd lv_summary_stats(const LvPath& path);

// ---------------------------------------------------------------------------

/// Per-summary trimmed standardization fitted on a prior-predictive pilot
/// set (trim fraction 0.0125 per tail). Fitting is a one-time operation.
class PilotStandardizer {
 public:
  void fit(const Matrix& pilot_rows);
  Eigen::VectorXd transform(const Eigen::VectorXd& summary) const;
  Matrix transform_rows(const Matrix& rows) const;
  bool fitted() const { return fitted_; }
  const Eigen::VectorXd& trimmed_mean() const { return mean_; }
  const Eigen::VectorXd& trimmed_std() const { return std_; }

 private:
  Eigen::VectorXd mean_, std_;
  bool fitted_ = false;
};

/// Permutation-invariant summary network: rho(sum_i phi(x_i)) with sum
/// pooling. phi: 2 -> 32 -> 32, rho: 32 -> 32 -> n_summaries, tanh.
class DeepSetsNet {
 public:
  DeepSetsNet(int element_dim, int n_summaries, RngStream& rng);

  /// set: n x element_dim (one element per row) -> 1 x n_summaries.
  Var forward(const Var& set) const;
  Eigen::VectorXd forward_values(const Matrix& set) const;

  /// Many sets at once: `set_size` consecutive rows per set. Returns
  /// (n_sets x n_summaries).
  Var forward_batch(const Matrix& stacked_elements, int set_size) const;

  ad::ParameterStore& params() { return params_; }
  int output_dim() const { return out_dim_; }

 private:
  int out_dim_;
  ad::ParameterStore params_;
  Var phi_w1_, phi_b1_, phi_w2_, phi_b2_;
  Var rho_w1_, rho_b1_, rho_w2_, rho_b2_;
};

/// An implicit model: parameter vector + RNG stream -> data/summary vector.
struct SimulatorSpec {
  std::string name;
  int theta_dim = 0;
  int x_dim = 0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, RngStream&)> simulate;
  std::shared_ptr<Prior> prior;
  std::optional<Eigen::VectorXd> theta_gt;
};

}  // namespace snpla::models
