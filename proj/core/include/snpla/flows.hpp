#pragma once

#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "snpla/autodiff.hpp"
#include "snpla/rng.hpp"

#include <json.hpp>

namespace snpla::flow {

using ad::Matrix;
using ad::Var;

/// MADE-style masked conditioner producing per-coordinate shift and
/// log-scale. Output pair (mu_i, s_i) depends only on inputs of degree < i
/// and on the full (unmasked) context. Log-scale outputs are clamped to
/// [-7, 7] by tanh scaling.
class MadeConditioner {
 public:
  MadeConditioner() = default;
  MadeConditioner(int dim, int context_dim, std::vector<int> hidden,
                  ad::ParameterStore& store, const std::string& prefix,
                  RngStream& rng);

  /// x: N x dim, ctx: N x context_dim (empty allowed when context_dim == 0).
  /// Returns (shift N x dim, log_scale N x dim).
  std::pair<Var, Var> shift_and_log_scale(const Var& x, const Var& ctx) const;

  int dim() const { return d_; }

 private:
  int d_ = 0, c_ = 0;
  std::vector<int> hidden_;
  std::vector<Var> weights_, biases_;
  std::vector<Matrix> masks_;
};

struct AffineLayer {
  MadeConditioner conditioner;
};
struct PermuteLayer {
  std::vector<int> perm;  // out column j takes in column perm[j]
};
struct SigmoidBoxLayer {
  Eigen::VectorXd lower, upper;
};
using FlowLayer = std::variant<AffineLayer, PermuteLayer, SigmoidBoxLayer>;

struct FlowArchitecture {
  int dim = 1;
  int context_dim = 0;
  int n_layers = 5;
  std::vector<int> hidden = {50, 50};
  std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> box;
};

/// Conditional masked autoregressive flow over a standard-normal base.
/// Layer order in the sampling direction: [affine, reversal]*, affine,
/// then the sigmoid box transform when configured. Density evaluation is
/// one conditioner pass per layer; sampling is dim sequential passes.
class ConditionalFlow {
 public:
  ConditionalFlow(FlowArchitecture arch, RngStream& rng);

  struct Pass {
    Var x;       // transformed batch
    Var logdet;  // N x 1
  };

  /// Sampling direction u -> x. Differentiable w.r.t. u, ctx, and weights.
  Pass forward(const Var& u, const Var& ctx) const;
  /// Density direction x -> u. Throws ad::DomainError for x on/outside the
  /// box boundary.
  Pass inverse(const Var& x, const Var& ctx) const;

  /// log p(x | ctx) = base.log_prob(T^{-1}(x)) + logdet_inverse. N x 1.
  Var log_prob(const Var& x, const Var& ctx) const;

  struct SampleResult {
    Var samples;    // N x dim
    Var log_probs;  // N x 1, consistent with log_prob() on the samples
    Matrix noise;   // the base draws used
  };
  /// Reparameterized sampling: gradients flow through the samples into the
  /// weights and the context.
  SampleResult sample(int n, const Var& ctx, RngStream& rng) const;
  SampleResult sample_from_noise(const Matrix& noise, const Var& ctx) const;

  ad::ParameterStore& params() { return params_; }
  const ad::ParameterStore& params() const { return params_; }
  int dim() const { return arch_.dim; }
  int context_dim() const { return arch_.context_dim; }
  const FlowArchitecture& architecture() const { return arch_; }

  nlohmann::json to_json() const;
  static ConditionalFlow from_json(const nlohmann::json& j);

 private:
  FlowArchitecture arch_;
  std::vector<FlowLayer> layers_;
  mutable ad::ParameterStore params_;

  Var prepare_context(const Var& ctx, Eigen::Index n) const;
};

/// -mean(log_prob(targets | contexts)); maximum-likelihood / forward-KL
/// training objective. contexts may be N x c or empty for unconditional.
Var forward_kl_loss(const ConditionalFlow& flow, const Matrix& targets,
                    const Matrix& contexts);

/// Reverse-KL objective for the posterior flow:
///   mean_i[ log q(theta_i | ctx) - log p_L(x_obs | theta_i) - log p(theta_i) ].
/// theta_i are reparameterized draws from the posterior flow, so gradients
/// reach the posterior weights (and the context graph, e.g. a summary net)
/// through both the sampling path and the likelihood flow's context input.
/// The likelihood flow's weights are expected to be frozen by the caller.
/// `prior_log_prob` may be null when the prior term is constant over the
/// flow's support (box-uniform prior under a sigmoid box transform).
Var reverse_kl_loss(const ConditionalFlow& posterior_flow,
                    const ConditionalFlow& likelihood_flow,
                    const std::function<Var(const Var& theta)>& prior_log_prob,
                    const Var& posterior_ctx, const Matrix& x_obs, int n_mini,
                    RngStream& rng, const Matrix* fixed_noise = nullptr);

}  // namespace snpla::flow
