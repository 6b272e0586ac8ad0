#include "snpla/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace snpla::inference {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Matrix rows_at(const Matrix& m, const std::vector<int>& idx, int first, int count) {
  Matrix out(count, m.cols());
  for (int i = 0; i < count; ++i) out.row(i) = m.row(idx[first + i]);
  return out;
}

}  // namespace

TrainResult train_density_model(flow::ConditionalFlow& flow, const Matrix& contexts,
                                const Matrix& targets, double lr, double val_frac,
                                RngStream& rng, const TrainOptions& opts,
                                ad::Adam* optimizer) {
  long n = targets.rows();
  if (n < 10)
    throw std::invalid_argument("train_density_model: need at least 10 pairs");
  if (val_frac <= 0 || val_frac >= 1)
    throw std::invalid_argument("train_density_model: val_frac in (0,1) required");

  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  int n_val = static_cast<int>(std::floor(val_frac * static_cast<double>(n)));
  n_val = std::max(1, n_val);
  int n_train = static_cast<int>(n) - n_val;

  Matrix val_targets = rows_at(targets, idx, n_train, n_val);
  Matrix val_contexts = rows_at(contexts, idx, n_train, n_val);
  std::vector<int> train_idx(idx.begin(), idx.begin() + n_train);

  ad::Adam local_opt(ad::AdamConfig{.clip_norm = opts.clip_norm});
  ad::Adam& opt = optimizer ? *optimizer : local_opt;

  TrainResult result;
  double best_val = kInf;
  Eigen::VectorXd best_weights = flow.params().flatten_values();
  int epochs_since_best = 0;

  for (int epoch = 0; epoch < opts.max_epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng.engine());
    double epoch_loss = 0;
    long seen = 0;
    bool aborted = false;
    for (int at = 0; at < n_train; at += opts.batch_size) {
      int bs = std::min(opts.batch_size, n_train - at);
      Matrix bt = rows_at(targets, train_idx, at, bs);
      Matrix bc = rows_at(contexts, train_idx, at, bs);
      try {
        flow.params().zero_grad();
        ad::Var loss = flow::forward_kl_loss(flow, bt, bc);
        double lv = loss.value()(0, 0);
        if (!std::isfinite(lv)) throw ad::GradientError("loss", "non-finite loss");
        ad::backward(loss);
        opt.step(flow.params(), lr);
        epoch_loss += lv * bs;
        seen += bs;
      } catch (const ad::GradientError&) {
        aborted = true;
        break;
      } catch (const ad::DomainError&) {
        aborted = true;
        break;
      }
    }
    if (aborted) {
      flow.params().unflatten_values(best_weights);
      result.degraded = true;
      break;
    }
    result.train_losses.push_back(seen ? epoch_loss / static_cast<double>(seen) : 0.0);

    double val_loss =
        flow::forward_kl_loss(flow, val_targets, val_contexts).value()(0, 0);
    result.val_losses.push_back(val_loss);
    if (val_loss < best_val - opts.min_delta) {
      best_val = val_loss;
      best_weights = flow.params().flatten_values();
      result.best_epoch = epoch;
      epochs_since_best = 0;
    } else if (++epochs_since_best >= opts.patience) {
      break;
    }
  }
  flow.params().unflatten_values(best_weights);
  return result;
}

MixtureDraw proposal_mixture_sample(int n, double alpha, const models::Prior& prior,
                                    const flow::ConditionalFlow* posterior_flow,
                                    const Matrix& posterior_ctx, RngStream& rng) {
  if (alpha < 0 || alpha > 1)
    throw std::invalid_argument("proposal_mixture_sample: alpha in [0,1]");
  if (alpha < 1 && posterior_flow == nullptr)
    throw std::invalid_argument("proposal_mixture_sample: flow required for alpha < 1");

  MixtureDraw out;
  out.from_prior.resize(n);
  int n_flow = 0;
  for (int i = 0; i < n; ++i) {
    out.from_prior[i] = rng.uniform() < alpha;
    if (!out.from_prior[i]) ++n_flow;
  }
  Matrix flow_draws;
  if (n_flow > 0) {
    auto s = posterior_flow->sample(n_flow, ad::Var::leaf(posterior_ctx), rng);
    flow_draws = s.samples.value();
  }
  out.thetas.resize(n, prior.dim());
  int at_flow = 0;
  for (int i = 0; i < n; ++i) {
    if (out.from_prior[i])
      out.thetas.row(i) = prior.sample(rng).transpose();
    else
      out.thetas.row(i) = flow_draws.row(at_flow++);
  }
  return out;
}

void SnplaConfig::validate() const {
  if (rounds < 1) throw std::invalid_argument("SnplaConfig: rounds >= 1");
  if (n_mini > n_post) throw std::invalid_argument("SnplaConfig: n_mini <= n_post");
  if (n_mini < 1) throw std::invalid_argument("SnplaConfig: n_mini >= 1");
  if (lambda <= 0) throw std::invalid_argument("SnplaConfig: lambda > 0");
  if (val_frac <= 0 || val_frac >= 1)
    throw std::invalid_argument("SnplaConfig: val_frac in (0,1)");
}

namespace {

// One reverse-KL posterior update pass (step 2) for a round; returns false
// if a gradient blow-up aborted it.
struct Step2Outcome {
  bool ok = true;
  std::vector<double> losses, val_losses;
};

// Joint forward-KL hot start of posterior flow + summary net: contexts are
// the summary-net outputs on the simulated sets, so both get gradients.
void hot_start_with_summary(const SnplaConfig& cfg, flow::ConditionalFlow& posterior,
                            models::DeepSetsNet& net, ad::ParameterStore& store,
                            const Matrix& thetas, const Matrix& xs, RngStream& rng) {
  long n = thetas.rows();
  int elem_dim = static_cast<int>(xs.cols()) / cfg.set_size;

  auto stack_sets = [&](const Matrix& rows) {
    Matrix stacked(rows.rows() * cfg.set_size, elem_dim);
    for (long i = 0; i < rows.rows(); ++i)
      for (int e = 0; e < cfg.set_size; ++e)
        stacked.row(i * cfg.set_size + e) =
            rows.row(i).segment(e * elem_dim, elem_dim);
    return stacked;
  };
  auto batch_loss = [&](const Matrix& bt, const Matrix& brows) {
    ad::Var ctx = net.forward_batch(stack_sets(brows), cfg.set_size);
    return ad::neg(ad::mean(posterior.log_prob(ad::Var::leaf(bt), ctx)));
  };

  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  int n_val = std::max(1, static_cast<int>(std::floor(cfg.val_frac * n)));
  int n_train = static_cast<int>(n) - n_val;
  Matrix val_thetas = rows_at(thetas, idx, n_train, n_val);
  Matrix val_xs = rows_at(xs, idx, n_train, n_val);
  std::vector<int> train_idx(idx.begin(), idx.begin() + n_train);

  ad::Adam opt(ad::AdamConfig{.clip_norm = cfg.train.clip_norm});
  double best_val = kInf;
  Eigen::VectorXd best_weights = store.flatten_values();
  int since_best = 0;

  for (int epoch = 0; epoch < cfg.train.max_epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng.engine());
    bool aborted = false;
    for (int at = 0; at < n_train; at += cfg.train.batch_size) {
      int bs = std::min(cfg.train.batch_size, n_train - at);
      try {
        store.zero_grad();
        ad::Var loss = batch_loss(rows_at(thetas, train_idx, at, bs),
                                  rows_at(xs, train_idx, at, bs));
        if (!std::isfinite(loss.value()(0, 0)))
          throw ad::GradientError("loss", "non-finite hot-start loss");
        ad::backward(loss);
        opt.step(store, cfg.lr_post);
      } catch (const ad::GradientError&) {
        aborted = true;
        break;
      } catch (const ad::DomainError&) {
        aborted = true;
        break;
      }
    }
    if (aborted) break;

    double val = batch_loss(val_thetas, val_xs).value()(0, 0);
    if (val < best_val - cfg.train.min_delta) {
      best_val = val;
      best_weights = store.flatten_values();
      since_best = 0;
    } else if (++since_best >= cfg.train.patience) {
      break;
    }
  }
  store.unflatten_values(best_weights);
}

Step2Outcome run_step2(const SnplaConfig& cfg, flow::ConditionalFlow& posterior,
                       const flow::ConditionalFlow& likelihood,
                       const std::function<ad::Var(const ad::Var&)>& prior_fn,
                       const std::function<ad::Var()>& make_ctx,
                       const Matrix& x_obs_row, ad::ParameterStore& opt_store,
                       ad::Adam& opt, double lr, const Matrix& val_noise,
                       RngStream& rng) {
  Step2Outcome out;
  int n_batches = cfg.n_post / cfg.n_mini;
  double best_val = kInf;
  Eigen::VectorXd best_weights = opt_store.flatten_values();
  int since_best = 0;

  for (int j = 0; j < n_batches; ++j) {
    try {
      opt_store.zero_grad();
      ad::Var loss = flow::reverse_kl_loss(posterior, likelihood, prior_fn,
                                           make_ctx(), x_obs_row, cfg.n_mini, rng);
      double lv = loss.value()(0, 0);
      if (!std::isfinite(lv)) throw ad::GradientError("loss", "non-finite step-2 loss");
      ad::backward(loss);
      opt.step(opt_store, lr);
      out.losses.push_back(lv);
    } catch (const ad::GradientError&) {
      out.ok = false;
      return out;
    } catch (const ad::DomainError&) {
      out.ok = false;
      return out;
    }

    double val = flow::reverse_kl_loss(posterior, likelihood, prior_fn, make_ctx(),
                                       x_obs_row, cfg.n_mini, rng, &val_noise)
                     .value()(0, 0);
    out.val_losses.push_back(val);
    if (val < best_val) {
      best_val = val;
      best_weights = opt_store.flatten_values();
      since_best = 0;
    } else if (++since_best >= cfg.step2_patience) {
      break;
    }
  }
  opt_store.unflatten_values(best_weights);
  return out;
}

}  // namespace

SnplaResult snpla_run(const SnplaConfig& cfg, const models::SimulatorSpec& sim,
                      const Eigen::VectorXd& x_obs) {
  cfg.validate();
  if (x_obs.size() != sim.x_dim)
    throw std::invalid_argument("snpla_run: x_obs dim mismatch");

  RngStream rng_sim = RngStream::named(cfg.seed, "simulate");
  RngStream rng_init = RngStream::named(cfg.seed, "flow-init");
  RngStream rng_step2 = RngStream::named(cfg.seed, "step2-noise");
  RngStream rng_train = RngStream::named(cfg.seed, "train-shuffle");
  RngStream rng_test = RngStream::named(cfg.seed, "test-sample");

  const int theta_dim = sim.theta_dim;
  const int x_dim = sim.x_dim;
  const int post_ctx_dim = cfg.use_summary_net ? cfg.summary_dim : x_dim;

  SnplaResult result;
  flow::FlowArchitecture like_arch{x_dim, theta_dim, cfg.flow_layers, cfg.hidden, {}};
  result.likelihood_flow =
      std::make_unique<flow::ConditionalFlow>(like_arch, rng_init);

  flow::FlowArchitecture post_arch{theta_dim, post_ctx_dim, cfg.flow_layers,
                                   cfg.hidden, {}};
  if (sim.prior->is_box())
    post_arch.box = {sim.prior->box().lower(), sim.prior->box().upper()};
  result.posterior_flow =
      std::make_unique<flow::ConditionalFlow>(post_arch, rng_init);

  if (cfg.use_summary_net) {
    if (x_dim % cfg.set_size != 0)
      throw std::invalid_argument("snpla_run: x_dim not divisible by set_size");
    result.summary_net = std::make_unique<models::DeepSetsNet>(
        x_dim / cfg.set_size, cfg.summary_dim, rng_init);
  }
  const int elem_dim = cfg.use_summary_net ? x_dim / cfg.set_size : 0;

  auto reshape_set = [&](const Eigen::VectorXd& x) {
    Matrix set(cfg.set_size, elem_dim);
    for (int i = 0; i < cfg.set_size; ++i)
      set.row(i) = x.segment(i * elem_dim, elem_dim).transpose();
    return set;
  };
  Matrix x_obs_row = x_obs.transpose();
  Matrix x_obs_set = cfg.use_summary_net ? reshape_set(x_obs) : Matrix();

  // Posterior-flow context: graph-building version (gradients reach the
  // summary net) and a plain-values version for proposal sampling.
  auto make_post_ctx = [&]() -> ad::Var {
    if (cfg.use_summary_net)
      return result.summary_net->forward(ad::Var::leaf(x_obs_set));
    return ad::Var::leaf(x_obs_row);
  };
  auto post_ctx_values = [&]() -> Matrix {
    return make_post_ctx().value();
  };

  ad::ParameterStore post_opt_store;
  post_opt_store.adopt(result.posterior_flow->params());
  if (cfg.use_summary_net) post_opt_store.adopt(result.summary_net->params());

  ad::Adam like_opt(ad::AdamConfig{.clip_norm = cfg.train.clip_norm});
  ad::Adam post_opt(ad::AdamConfig{.clip_norm = cfg.train.clip_norm});

  std::function<ad::Var(const ad::Var&)> prior_fn = sim.prior->log_prob_fn();

  Matrix all_thetas(0, theta_dim), all_xs(0, x_dim);

  for (int r = 1; r <= cfg.rounds; ++r) {
    RoundRecord rec;
    rec.round = r;
    rec.alpha = std::exp(-cfg.lambda * (r - 1));

    // Step 1: simulate from the prior/posterior mixture, grow the dataset.
    auto t0 = std::chrono::steady_clock::now();
    MixtureDraw draw = proposal_mixture_sample(
        cfg.n_sim_per_round, rec.alpha, *sim.prior,
        r == 1 ? nullptr : result.posterior_flow.get(), post_ctx_values(), rng_sim);
    Matrix xs(cfg.n_sim_per_round, x_dim);
    for (int i = 0; i < cfg.n_sim_per_round; ++i) {
      xs.row(i) = sim.simulate(draw.thetas.row(i).transpose(), rng_sim).transpose();
      ++result.simulator_calls;
    }
    long old = all_thetas.rows();
    all_thetas.conservativeResize(old + cfg.n_sim_per_round, theta_dim);
    all_xs.conservativeResize(old + cfg.n_sim_per_round, x_dim);
    all_thetas.bottomRows(cfg.n_sim_per_round) = draw.thetas;
    all_xs.bottomRows(cfg.n_sim_per_round) = xs;
    rec.dataset_size = all_thetas.rows();
    rec.t_simulate = seconds_since(t0);

    // Likelihood update: forward KL on the cumulative set, warm-started.
    t0 = std::chrono::steady_clock::now();
    TrainResult like_train =
        train_density_model(*result.likelihood_flow, all_thetas, all_xs, cfg.lr_like,
                            cfg.val_frac, rng_train, cfg.train, &like_opt);
    rec.like_train_losses = like_train.train_losses;
    rec.like_val_losses = like_train.val_losses;
    rec.degraded = like_train.degraded;
    rec.t_train_like = seconds_since(t0);

    // Step 2': one-time forward-KL hot start of the posterior model on the
    // round-1 prior-predictive pairs.
    t0 = std::chrono::steady_clock::now();
    if (r == 1) {
      if (!cfg.use_summary_net) {
        ad::Adam hot_opt(ad::AdamConfig{.clip_norm = cfg.train.clip_norm});
        train_density_model(*result.posterior_flow, all_xs, all_thetas, cfg.lr_post,
                            cfg.val_frac, rng_train, cfg.train, &hot_opt);
      } else {
        hot_start_with_summary(cfg, *result.posterior_flow, *result.summary_net,
                               post_opt_store, all_thetas, all_xs, rng_train);
      }
    }

    // Step 2: simulation-on-the-fly reverse-KL updates.
    double lr_r = ad::exp_lr_decay(cfg.lr_post, cfg.gamma_post, r);
    int n_val = std::max(1, static_cast<int>(std::lround(cfg.n_post * cfg.val_frac)));
    Matrix val_noise = rng_step2.normal_matrix(n_val, theta_dim);
    Eigen::VectorXd pre_round = post_opt_store.flatten_values();

    result.likelihood_flow->params().set_requires_grad(false);
    Step2Outcome s2 =
        run_step2(cfg, *result.posterior_flow, *result.likelihood_flow, prior_fn,
                  make_post_ctx, x_obs_row, post_opt_store, post_opt, lr_r,
                  val_noise, rng_step2);
    if (!s2.ok) {
      post_opt_store.unflatten_values(pre_round);
      s2 = run_step2(cfg, *result.posterior_flow, *result.likelihood_flow, prior_fn,
                     make_post_ctx, x_obs_row, post_opt_store, post_opt, lr_r / 2,
                     val_noise, rng_step2);
      if (!s2.ok) {
        post_opt_store.unflatten_values(pre_round);
        rec.failed = true;
      }
    }
    result.likelihood_flow->params().set_requires_grad(true);
    rec.post_loss_trace = s2.losses;
    rec.post_val_trace = s2.val_losses;
    rec.t_train_post = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    auto test = result.posterior_flow->sample(
        cfg.n_test_post, ad::Var::leaf(post_ctx_values()), rng_test);
    rec.posterior_samples = test.samples.value();
    rec.t_sample = seconds_since(t0);

    result.rounds.push_back(std::move(rec));
  }

  result.dataset_thetas = std::move(all_thetas);
  result.dataset_xs = std::move(all_xs);
  return result;
}

Matrix mcmc_sample(const std::function<Eigen::VectorXd(const Matrix&)>& log_density,
                   int dim, int n, const McmcConfig& cfg, const Eigen::VectorXd& init,
                   RngStream& rng, McmcStats* stats) {
  if (cfg.burn_in < 0 || cfg.thinning < 1 || cfg.n_chains < 1)
    throw std::invalid_argument("mcmc_sample: bad config");
  int chains = cfg.n_chains;
  Matrix pos = init.transpose().replicate(chains, 1);
  Eigen::VectorXd logp = log_density(pos);
  if (!logp.allFinite())
    throw std::invalid_argument("mcmc_sample: log density not finite at init point");

  double scale = cfg.initial_scale;
  long accepted = 0, proposed = 0;
  long window_acc = 0, window_n = 0;

  auto step = [&](bool adapting) {
    Matrix prop = pos + scale * rng.normal_matrix(chains, dim);
    Eigen::VectorXd lp_new = log_density(prop);
    for (int c = 0; c < chains; ++c) {
      ++proposed;
      ++window_n;
      double log_u = std::log(std::max(rng.uniform(), 1e-300));
      if (lp_new(c) - logp(c) > log_u) {
        pos.row(c) = prop.row(c);
        logp(c) = lp_new(c);
        ++accepted;
        ++window_acc;
      }
    }
    if (adapting && window_n >= 50 * chains) {
      double acc = static_cast<double>(window_acc) / static_cast<double>(window_n);
      scale *= std::exp(acc - 0.234);
      window_acc = window_n = 0;
    }
  };

  for (int t = 0; t < cfg.burn_in; ++t) step(true);
  if (cfg.burn_in > 0 &&
      static_cast<double>(accepted) / static_cast<double>(proposed) < 0.001)
    throw std::runtime_error(
        "mcmc_sample: burn-in acceptance below 0.1% (scale=" +
        std::to_string(scale) + ")");

  accepted = proposed = 0;
  Matrix out(n, dim);
  int collected = 0;
  while (collected < n) {
    for (int t = 0; t < cfg.thinning; ++t) step(false);
    for (int c = 0; c < chains && collected < n; ++c)
      out.row(collected++) = pos.row(c);
  }
  if (stats) {
    stats->acceptance_rate =
        proposed ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
    stats->final_scale = scale;
  }
  return out;
}

int decorrelation_thinning(
    const std::function<Eigen::VectorXd(const Matrix&)>& log_density, int dim,
    const Eigen::VectorXd& init, RngStream& rng, int pilot_draws) {
  McmcConfig cfg;
  cfg.n_chains = 1;
  cfg.burn_in = 500;
  Matrix chain = mcmc_sample(log_density, dim, pilot_draws, cfg, init, rng);
  Eigen::VectorXd mean = chain.colwise().mean();
  Matrix centered = chain.rowwise() - mean.transpose();
  Eigen::VectorXd var = centered.array().square().colwise().mean();
  for (int t : {1, 2, 5, 10, 20, 50}) {
    double worst = 0;
    for (int j = 0; j < dim; ++j) {
      double acc = 0;
      long n = chain.rows() - t;
      for (long i = 0; i < n; ++i) acc += centered(i, j) * centered(i + t, j);
      worst = std::max(worst, std::abs(acc / n / std::max(var(j), 1e-300)));
    }
    if (worst < 0.1) return t;
  }
  return 50;
}

SnlResult snl_run(const SnlConfig& cfg, const models::SimulatorSpec& sim,
                  const Eigen::VectorXd& x_obs) {
  if (cfg.rounds < 1) throw std::invalid_argument("snl_run: rounds >= 1");
  RngStream rng_sim = RngStream::named(cfg.seed, "simulate");
  RngStream rng_init = RngStream::named(cfg.seed, "flow-init");
  RngStream rng_train = RngStream::named(cfg.seed, "train-shuffle");
  RngStream rng_mcmc = RngStream::named(cfg.seed, "mcmc");

  SnlResult result;
  flow::FlowArchitecture arch{sim.x_dim, sim.theta_dim, cfg.flow_layers, cfg.hidden, {}};
  result.likelihood_flow = std::make_unique<flow::ConditionalFlow>(arch, rng_init);

  Matrix x_obs_row = x_obs.transpose();
  auto synthetic_posterior = [&](const Matrix& thetas) {
    Eigen::VectorXd lp(thetas.rows());
    for (long i = 0; i < thetas.rows(); ++i) {
      Eigen::VectorXd th = thetas.row(i).transpose();
      double prior_lp = sim.prior->log_prob(th);
      if (!std::isfinite(prior_lp)) {
        lp(i) = -kInf;
        continue;
      }
      double like = result.likelihood_flow
                        ->log_prob(ad::Var::leaf(x_obs_row),
                                   ad::Var::leaf(Matrix(th.transpose())))
                        .value()(0, 0);
      lp(i) = prior_lp + like;
    }
    return lp;
  };

  ad::Adam opt(ad::AdamConfig{.clip_norm = cfg.train.clip_norm});
  Matrix all_thetas(0, sim.theta_dim), all_xs(0, sim.x_dim);
  Eigen::VectorXd chain_init;

  for (int r = 1; r <= cfg.rounds; ++r) {
    RoundRecord rec;
    rec.round = r;

    auto t0 = std::chrono::steady_clock::now();
    Matrix thetas(cfg.n_sim_per_round, sim.theta_dim);
    if (r == 1) {
      for (int i = 0; i < cfg.n_sim_per_round; ++i)
        thetas.row(i) = sim.prior->sample(rng_sim).transpose();
    } else {
      thetas = mcmc_sample(synthetic_posterior, sim.theta_dim, cfg.n_sim_per_round,
                           cfg.mcmc, chain_init, rng_mcmc);
    }
    Matrix xs(cfg.n_sim_per_round, sim.x_dim);
    for (int i = 0; i < cfg.n_sim_per_round; ++i) {
      xs.row(i) = sim.simulate(thetas.row(i).transpose(), rng_sim).transpose();
      ++result.simulator_calls;
    }
    rec.t_simulate = seconds_since(t0);

    long old = all_thetas.rows();
    all_thetas.conservativeResize(old + cfg.n_sim_per_round, sim.theta_dim);
    all_xs.conservativeResize(old + cfg.n_sim_per_round, sim.x_dim);
    all_thetas.bottomRows(cfg.n_sim_per_round) = thetas;
    all_xs.bottomRows(cfg.n_sim_per_round) = xs;
    rec.dataset_size = all_thetas.rows();

    t0 = std::chrono::steady_clock::now();
    TrainResult tr =
        train_density_model(*result.likelihood_flow, all_thetas, all_xs, cfg.lr,
                            cfg.val_frac, rng_train, cfg.train, &opt);
    rec.like_train_losses = tr.train_losses;
    rec.like_val_losses = tr.val_losses;
    rec.degraded = tr.degraded;
    rec.t_train_like = seconds_since(t0);

    // Evaluation samples from the current synthetic posterior.
    chain_init = sim.prior->is_box()
                     ? Eigen::VectorXd((sim.prior->box().lower() +
                                        sim.prior->box().upper()) / 2.0)
                     : sim.prior->gaussian().mean();
    // Prefer restarting from the best theta seen so far.
    if (all_thetas.rows() > 0) {
      Eigen::VectorXd best = all_thetas.row(all_thetas.rows() - 1).transpose();
      Eigen::VectorXd lp = synthetic_posterior(all_thetas.bottomRows(
          std::min<long>(all_thetas.rows(), 200)));
      long best_i;
      lp.maxCoeff(&best_i);
      best = all_thetas
                 .bottomRows(std::min<long>(all_thetas.rows(), 200))
                 .row(best_i)
                 .transpose();
      if (std::isfinite(synthetic_posterior(Matrix(best.transpose()))(0)))
        chain_init = best;
    }

    t0 = std::chrono::steady_clock::now();
    try {
      rec.posterior_samples = mcmc_sample(synthetic_posterior, sim.theta_dim,
                                          cfg.n_test_post, cfg.mcmc, chain_init,
                                          rng_mcmc);
    } catch (const std::exception&) {
      rec.failed = true;
      if (!result.rounds.empty())
        rec.posterior_samples = result.rounds.back().posterior_samples;
    }
    rec.t_sample = seconds_since(t0);

    result.rounds.push_back(std::move(rec));
  }
  return result;
}

std::vector<AbcGeneration> smcabc_run(const models::Prior& prior,
                                      const models::SimulatorSpec& sim,
                                      const Eigen::VectorXd& x_obs,
                                      const SmcAbcConfig& cfg) {
  RngStream rng = RngStream::named(cfg.seed, "abc");
  int n = cfg.n_particles;
  int d = prior.dim();
  long sims = 0;

  std::vector<AbcGeneration> generations;

  // Generation 0: prior rejection at the quantile-based epsilon.
  Matrix particles(n, d);
  Eigen::VectorXd distances(n);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd theta = prior.sample(rng);
    Eigen::VectorXd x = sim.simulate(theta, rng);
    ++sims;
    particles.row(i) = theta.transpose();
    distances(i) = (x - x_obs).norm();
  }
  Eigen::VectorXd weights = Eigen::VectorXd::Constant(n, 1.0 / n);
  {
    AbcGeneration g;
    g.particles = particles;
    g.weights = weights;
    g.epsilon = distances.maxCoeff();
    g.sims_used = sims;
    generations.push_back(g);
  }

  auto quantile = [](Eigen::VectorXd v, double q) {
    std::sort(v.begin(), v.end());
    long k = static_cast<long>(q * static_cast<double>(v.size() - 1));
    return v(k);
  };

  double prev_eps = kInf;
  while (sims < cfg.max_sims) {
    double eps = quantile(distances, cfg.epsilon_quantile);
    if (std::isfinite(prev_eps) && prev_eps - eps < 0.01 * prev_eps) break;
    prev_eps = eps;

    // Weighted covariance of the current population; kernel = 2 * cov.
    Eigen::VectorXd mu = particles.transpose() * weights;
    Matrix centered = particles.rowwise() - mu.transpose();
    Matrix cov = centered.transpose() * weights.asDiagonal() * centered;
    cov = 2.0 * cov + 1e-10 * Matrix::Identity(d, d);
    Matrix chol = Eigen::LLT<Matrix>(cov).matrixL();

    std::discrete_distribution<int> pick(weights.data(), weights.data() + n);

    Matrix new_particles(n, d);
    Eigen::VectorXd new_distances(n);
    int accepted = 0;
    while (accepted < n && sims < cfg.max_sims) {
      int j = pick(rng.engine());
      Eigen::VectorXd z(d);
      for (int k = 0; k < d; ++k) z(k) = rng.normal();
      Eigen::VectorXd theta = particles.row(j).transpose() + chol * z;
      if (!std::isfinite(prior.log_prob(theta))) continue;
      Eigen::VectorXd x = sim.simulate(theta, rng);
      ++sims;
      double dist = (x - x_obs).norm();
      if (dist < eps) {
        new_particles.row(accepted) = theta.transpose();
        new_distances(accepted) = dist;
        ++accepted;
      }
    }
    if (accepted < n) break;  // budget exhausted mid-generation

    // Importance weights: prior / kernel mixture density.
    Matrix cov_inv = cov.inverse();
    double log_norm = -0.5 * (d * 1.8378770664093453 +
                              2.0 * Matrix(Eigen::LLT<Matrix>(cov).matrixL())
                                        .diagonal()
                                        .array()
                                        .log()
                                        .sum());
    Eigen::VectorXd new_weights(n);
    for (int i = 0; i < n; ++i) {
      double denom = 0;
      for (int j = 0; j < n; ++j) {
        Eigen::VectorXd diff =
            (new_particles.row(i) - particles.row(j)).transpose();
        denom += weights(j) * std::exp(log_norm - 0.5 * diff.dot(cov_inv * diff));
      }
      new_weights(i) =
          std::exp(prior.log_prob(new_particles.row(i).transpose())) /
          std::max(denom, 1e-300);
    }
    new_weights /= new_weights.sum();

    particles = new_particles;
    distances = new_distances;
    weights = new_weights;

    AbcGeneration g;
    g.particles = particles;
    g.weights = weights;
    g.epsilon = eps;
    g.sims_used = sims;
    generations.push_back(g);
  }
  return generations;
}

}  // namespace snpla::inference
