#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <iostream>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "snpla/experiments.hpp"
#include "snpla/inference.hpp"
#include "snpla/io.hpp"
#include "snpla/metrics.hpp"

namespace fs = std::filesystem;
using namespace snpla;
using nlohmann::json;

namespace {

struct MetricRow {
  std::string run_id;
  std::uint64_t seed;
  int round;
  double alpha;
  std::string name;
  double value;
};

struct SeedOutcome {
  bool ok = false;
  std::string run_id;
  std::uint64_t seed = 0;
  std::vector<MetricRow> metrics;
  std::string error;
};

std::string make_run_id(const io::ExperimentConfig& cfg, std::uint64_t seed) {
  return cfg.experiment + "_" + cfg.method + "_seed" + std::to_string(seed);
}

void write_dataset_jsonl(const fs::path& path, const std::string& run_id,
                         std::uint64_t seed, const ad::Matrix& thetas,
                         const ad::Matrix& xs, int n_per_round) {
  std::ofstream out(path, std::ios::binary);
  for (long i = 0; i < thetas.rows(); ++i) {
    json j;
    j["run_id"] = run_id;
    j["round"] = static_cast<int>(i / n_per_round) + 1;
    j["seed"] = seed;
    std::vector<double> th(thetas.row(i).begin(), thetas.row(i).end());
    std::vector<double> xv(xs.row(i).begin(), xs.row(i).end());
    j["theta"] = th;
    j["x"] = xv;
    io::append_jsonl(out, j);
  }
}

void eval_round_metrics(const experiments::ExperimentSetup& setup,
                        inference::RoundRecord& rec) {
  try {
    rec.metrics = setup.eval(rec.posterior_samples);
  } catch (const std::exception&) {
    // leave empty: metric not computable for this round (e.g. degenerate samples)
  }
}

SeedOutcome run_one_seed(const io::ExperimentConfig& cfg,
                         const experiments::ExperimentSetup& setup,
                         std::uint64_t seed) {
  SeedOutcome out;
  out.seed = seed;
  out.run_id = make_run_id(cfg, seed);
  try {
    io::RunArtifacts art = io::RunArtifacts::create(cfg, out.run_id);
    std::ofstream rounds_out(art.rounds_jsonl(), std::ios::binary);
    std::vector<inference::RoundRecord> rounds;
    long simulator_calls = 0;

    if (cfg.method == "snpla") {
      inference::SnplaConfig c = cfg.snpla;
      c.seed = seed;
      auto result = inference::snpla_run(c, setup.sim, setup.x_obs);
      rounds = std::move(result.rounds);
      simulator_calls = result.simulator_calls;
      io::save_flow_checkpoint(art.checkpoint("posterior_flow"),
                               *result.posterior_flow);
      io::save_flow_checkpoint(art.checkpoint("likelihood_flow"),
                               *result.likelihood_flow);
      // Posterior-flow context values, for the timing command.
      ad::Matrix ctx = setup.x_obs.transpose();
      if (result.summary_net) {
        int elem = setup.sim.x_dim / c.set_size;
        ad::Matrix set(c.set_size, elem);
        for (int i = 0; i < c.set_size; ++i)
          set.row(i) = setup.x_obs.segment(i * elem, elem).transpose();
        ctx = result.summary_net->forward_values(set).transpose();
      }
      std::vector<double> cv(ctx.data(), ctx.data() + ctx.size());
      std::ofstream cj(art.dir / "posterior_context.json", std::ios::binary);
      cj << json(cv).dump() << '\n';
      write_dataset_jsonl(art.dir / "dataset.jsonl", out.run_id, seed,
                          result.dataset_thetas, result.dataset_xs,
                          c.n_sim_per_round);
    } else if (cfg.method == "snl") {
      inference::SnlConfig c = cfg.snl;
      c.seed = seed;
      auto result = inference::snl_run(c, setup.sim, setup.x_obs);
      rounds = std::move(result.rounds);
      simulator_calls = result.simulator_calls;
      io::save_flow_checkpoint(art.checkpoint("likelihood_flow"),
                               *result.likelihood_flow);
    } else {  // smcabc
      inference::SmcAbcConfig c = cfg.smcabc;
      c.seed = seed;
      auto gens = inference::smcabc_run(*setup.sim.prior, setup.sim, setup.x_obs, c);
      RngStream resample = RngStream::named(seed, "abc-resample");
      for (std::size_t g = 0; g < gens.size(); ++g) {
        inference::RoundRecord rec;
        rec.round = static_cast<int>(g) + 1;
        rec.alpha = 0.0;
        rec.dataset_size = gens[g].sims_used;
        rec.metrics["epsilon"] = gens[g].epsilon;
        std::discrete_distribution<int> pick(
            gens[g].weights.data(), gens[g].weights.data() + gens[g].weights.size());
        ad::Matrix samples(1000, setup.sim.theta_dim);
        for (int i = 0; i < 1000; ++i)
          samples.row(i) = gens[g].particles.row(pick(resample.engine()));
        rec.posterior_samples = samples;
        rounds.push_back(std::move(rec));
      }
      simulator_calls = gens.empty() ? 0 : gens.back().sims_used;
    }

    for (auto& rec : rounds) {
      auto eps = rec.metrics;  // keep smcabc's epsilon entry
      eval_round_metrics(setup, rec);
      rec.metrics.insert(eps.begin(), eps.end());
      io::append_jsonl(rounds_out, io::round_record_to_json(rec, out.run_id, seed));
      io::write_samples_csv(art.posterior_csv(rec.round), rec.posterior_samples);
      for (const auto& [name, value] : rec.metrics)
        out.metrics.push_back({out.run_id, seed, rec.round, rec.alpha, name, value});
    }
    json summary;
    summary["run_id"] = out.run_id;
    summary["seed"] = seed;
    summary["simulator_calls"] = simulator_calls;
    io::append_jsonl(rounds_out, summary);
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

template <typename Task>
std::vector<std::invoke_result_t<Task, int>> run_pool(int n, int jobs, Task task) {
  using R = std::invoke_result_t<Task, int>;
  std::vector<R> results(n);
  if (jobs < 1) jobs = 1;
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1))
      results[i] = task(i);
  };
  std::vector<std::thread> threads;
  for (int t = 0; t < std::min(jobs, n); ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  return results;
}

int cmd_run(const io::ExperimentConfig& cfg, int jobs) {
  experiments::ExperimentSetup setup = experiments::make_experiment(cfg);
  auto outcomes = run_pool(cfg.n_seeds, jobs, [&](int s) {
    return run_one_seed(cfg, setup, static_cast<std::uint64_t>(s));
  });

  fs::create_directories(cfg.output_dir);
  io::CsvWriter metrics(fs::path(cfg.output_dir) / "metrics.csv",
                        {"run_id", "seed", "round", "alpha", "metric_name",
                         "metric_value"});
  int failures = 0;
  for (const auto& o : outcomes) {
    if (!o.ok) {
      ++failures;
      std::cerr << o.run_id << ": FAILED: " << o.error << '\n';
      continue;
    }
    for (const auto& r : o.metrics)
      metrics.row({r.run_id, std::to_string(r.seed), std::to_string(r.round),
                   io::format_double(r.alpha), r.name, io::format_double(r.value)});
  }
  metrics.close();
  if (failures == cfg.n_seeds) return 1;
  return failures ? 2 : 0;
}

int cmd_sweep(io::ExperimentConfig cfg, std::vector<double> lambdas, int jobs) {
  if (lambdas.empty()) {
    std::cerr << "sweep: empty lambda list\n";
    return 1;
  }
  if (cfg.method != "snpla") {
    std::cerr << "sweep: method must be snpla\n";
    return 1;
  }
  experiments::ExperimentSetup setup = experiments::make_experiment(cfg);

  struct SweepPoint {
    double lambda;
    double metric = std::numeric_limits<double>::quiet_NaN();
    std::string error;
  };
  auto points = run_pool(static_cast<int>(lambdas.size()), jobs, [&](int i) {
    SweepPoint p;
    p.lambda = lambdas[i];
    io::ExperimentConfig c = cfg;
    c.snpla.lambda = lambdas[i];
    c.output_dir = (fs::path(cfg.output_dir) /
                    ("lambda_" + io::format_double(lambdas[i])))
                       .string();
    try {
      auto o = run_one_seed(c, setup, c.snpla.seed);
      if (!o.ok) throw std::runtime_error(o.error);
      double final_metric = std::numeric_limits<double>::quiet_NaN();
      int last_round = -1;
      for (const auto& r : o.metrics)
        if (r.name == setup.primary_metric && r.round > last_round) {
          last_round = r.round;
          final_metric = r.value;
        }
      p.metric = final_metric;
    } catch (const std::exception& e) {
      p.error = e.what();
    }
    return p;
  });

  fs::create_directories(cfg.output_dir);
  io::CsvWriter sweep(fs::path(cfg.output_dir) / "sweep.csv",
                      {"lambda", "final_metric"});
  double best = std::numeric_limits<double>::infinity();
  double worst = -std::numeric_limits<double>::infinity();
  bool all_finite = true;
  for (const auto& p : points) {
    if (!p.error.empty())
      std::cerr << "lambda=" << p.lambda << ": FAILED: " << p.error << '\n';
    sweep.row({io::format_double(p.lambda), io::format_double(p.metric)});
    if (std::isfinite(p.metric)) {
      best = std::min(best, p.metric);
      worst = std::max(worst, p.metric);
    } else {
      all_finite = false;
    }
  }
  sweep.close();
  if (std::isfinite(best) && best > 0)
    std::cout << "spread factor (worst/best): " << worst / best << '\n';
  std::cout << (all_finite ? "all lambdas finite\n" : "some lambdas non-finite\n");
  return all_finite ? 0 : 2;
}

int cmd_timing(const io::ExperimentConfig& cfg, int n_draws) {
  if (n_draws <= 0) {
    std::cerr << "timing: n_draws must be >= 1\n";
    return 1;
  }
  io::ExperimentConfig snpla_cfg = cfg, snl_cfg = cfg;
  snpla_cfg.method = "snpla";
  snl_cfg.method = "snl";
  fs::path snpla_dir = fs::path(cfg.output_dir) / make_run_id(snpla_cfg, 0);
  fs::path snl_dir = fs::path(cfg.output_dir) / make_run_id(snl_cfg, 0);
  fs::path post_ckpt = snpla_dir / "posterior_flow.json";
  fs::path like_ckpt = snl_dir / "likelihood_flow.json";
  for (const auto& p : {post_ckpt, snpla_dir / "posterior_context.json", like_ckpt})
    if (!fs::exists(p)) {
      std::cerr << "timing: missing checkpoint " << p
                << " (run the snpla and snl experiments first)\n";
      return 1;
    }

  flow::ConditionalFlow posterior = io::load_flow_checkpoint(post_ckpt);
  flow::ConditionalFlow likelihood = io::load_flow_checkpoint(like_ckpt);
  json ctx_json;
  {
    std::ifstream in(snpla_dir / "posterior_context.json");
    in >> ctx_json;
  }
  ad::Matrix ctx(1, ctx_json.size());
  for (std::size_t i = 0; i < ctx_json.size(); ++i)
    ctx(0, static_cast<long>(i)) = ctx_json[i].get<double>();

  experiments::ExperimentSetup setup = experiments::make_experiment(cfg);
  ad::Matrix x_obs_row = setup.x_obs.transpose();
  auto synthetic_posterior = [&](const ad::Matrix& thetas) {
    Eigen::VectorXd lp(thetas.rows());
    for (long i = 0; i < thetas.rows(); ++i) {
      Eigen::VectorXd th = thetas.row(i).transpose();
      double prior_lp = setup.sim.prior->log_prob(th);
      if (!std::isfinite(prior_lp)) {
        lp(i) = -std::numeric_limits<double>::infinity();
        continue;
      }
      lp(i) = prior_lp + likelihood
                             .log_prob(ad::Var::leaf(x_obs_row),
                                       ad::Var::leaf(ad::Matrix(th.transpose())))
                             .value()(0, 0);
    }
    return lp;
  };
  Eigen::VectorXd init = setup.sim.prior->is_box()
                             ? Eigen::VectorXd((setup.sim.prior->box().lower() +
                                                setup.sim.prior->box().upper()) /
                                               2.0)
                             : setup.sim.prior->gaussian().mean();

  auto median_of_5 = [](const std::function<void()>& work) {
    std::vector<double> times;
    for (int rep = 0; rep < 5; ++rep) {
      auto t0 = std::chrono::steady_clock::now();
      work();
      times.push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count());
    }
    std::sort(times.begin(), times.end());
    return times[2];
  };

  RngStream rng_flow = RngStream::named(cfg.data_seed, "timing-flow");
  double t_snpla = median_of_5([&] {
    auto s = posterior.sample(n_draws, ad::Var::leaf(ctx), rng_flow);
    volatile double sink = s.samples.value()(0, 0);
    (void)sink;
  });
  RngStream rng_mcmc = RngStream::named(cfg.data_seed, "timing-mcmc");
  inference::McmcConfig mcmc_cfg = cfg.snl.mcmc;
  mcmc_cfg.n_chains = 1;
  mcmc_cfg.thinning = inference::decorrelation_thinning(
      synthetic_posterior, setup.sim.theta_dim, init, rng_mcmc);
  std::cout << "thinning factor: " << mcmc_cfg.thinning << '\n';
  double t_snl = median_of_5([&] {
    ad::Matrix draws = inference::mcmc_sample(synthetic_posterior,
                                              setup.sim.theta_dim, n_draws,
                                              mcmc_cfg, init, rng_mcmc);
    volatile double sink = draws(0, 0);
    (void)sink;
  });

  fs::create_directories(cfg.output_dir);
  io::CsvWriter timing(fs::path(cfg.output_dir) / "timing.csv",
                       {"method", "n_draws", "median_sec"});
  timing.row({"snpla", std::to_string(n_draws), io::format_double(t_snpla)});
  timing.row({"snl", std::to_string(n_draws), io::format_double(t_snl)});
  timing.close();
  std::cout << "snpla median_sec=" << t_snpla << " snl median_sec=" << t_snl
            << " ratio snl/snpla=" << t_snl / t_snpla << '\n';
  return 0;
}

int cmd_sbc(const io::ExperimentConfig& cfg, int K, int L,
            const std::string& runner_kind) {
  experiments::ExperimentSetup setup = experiments::make_experiment(cfg);

  std::function<ad::Matrix(const Eigen::VectorXd&, int, RngStream&)> runner;
  if (runner_kind == "analytic") {
    if (cfg.experiment.rfind("mvg", 0) != 0) {
      std::cerr << "sbc: the analytic runner exists only for mvg experiments\n";
      return 1;
    }
    bool summaries = cfg.experiment == "mvg_summary";
    runner = [summaries](const Eigen::VectorXd& x, int n_draws, RngStream& rng) {
      Eigen::Vector2d xbar;
      int n_obs;
      if (summaries) {
        xbar << x(0), x(1);
        n_obs = 100;
      } else {
        n_obs = static_cast<int>(x.size() / 2);
        xbar.setZero();
        for (int i = 0; i < n_obs; ++i) xbar += x.segment<2>(2 * i);
        xbar /= n_obs;
      }
      auto post = experiments::mvg_posterior_from_stats(n_obs, xbar);
      Eigen::LLT<Eigen::Matrix2d> llt(post.cov);
      ad::Matrix draws(n_draws, 2);
      for (int i = 0; i < n_draws; ++i) {
        Eigen::Vector2d z(rng.normal(), rng.normal());
        draws.row(i) = (post.mean + llt.matrixL() * z).transpose();
      }
      return draws;
    };
  } else {  // method
    if (cfg.method != "snpla") {
      std::cerr << "sbc: the method runner supports snpla only\n";
      return 1;
    }
    runner = [&cfg, &setup](const Eigen::VectorXd& x, int n_draws, RngStream& rng) {
      inference::SnplaConfig c = cfg.snpla;
      c.seed = rng.engine()();
      c.n_test_post = n_draws;
      auto result = inference::snpla_run(c, setup.sim, x);
      return result.rounds.back().posterior_samples;
    };
  }

  RngStream rng = RngStream::named(cfg.data_seed, "sbc");
  metrics::SbcResult result;
  try {
    result = metrics::sbc(runner, *setup.sim.prior, setup.sim.simulate, K, L, rng);
  } catch (const std::exception& e) {
    std::cerr << "sbc: " << e.what() << '\n';
    return 1;
  }

  fs::create_directories(cfg.output_dir);
  for (long j = 0; j < result.histograms.rows(); ++j) {
    io::CsvWriter w(fs::path(cfg.output_dir) /
                        ("sbc_param" + std::to_string(j + 1) + ".csv"),
                    {"bin", "count", "lower_band", "upper_band"});
    for (long b = 0; b < result.histograms.cols(); ++b)
      w.row({std::to_string(b), io::format_double(result.histograms(j, b)),
             std::to_string(result.band_lower), std::to_string(result.band_upper)});
    w.close();
    std::cout << "param " << j + 1 << ": chi2=" << result.chi2_stat[j]
              << " p=" << result.p_value[j] << '\n';
  }
  std::cout << "skipped replicates: " << result.skipped << '\n';
  return 0;
}

int cmd_gradcheck() {
  int failures = 0;
  auto report = [&](const std::string& name, bool ok, double detail) {
    std::cout << (ok ? "PASS" : "FAIL") << "  " << name << "  (" << detail << ")\n";
    if (!ok) ++failures;
  };

  {  // forward-KL loss gradient vs central differences
    RngStream rng(11);
    flow::FlowArchitecture arch{2, 3, 3, {16, 16}, {}};
    flow::ConditionalFlow f(arch, rng);
    // move off the identity initialization
    ad::Matrix warm_t = rng.normal_matrix(64, 2), warm_c = rng.normal_matrix(64, 3);
    ad::Adam opt;
    for (int i = 0; i < 5; ++i) {
      f.params().zero_grad();
      ad::backward(flow::forward_kl_loss(f, warm_t, warm_c));
      opt.step(f.params(), 1e-3);
    }
    ad::Matrix t = rng.normal_matrix(16, 2), c = rng.normal_matrix(16, 3);
    auto rep = ad::finite_diff_check(
        [&] { return flow::forward_kl_loss(f, t, c); }, f.params(), 1e-5, 1e-4);
    report("forward_kl gradient", rep.pass, rep.max_rel_error);
  }
  {  // reparameterized sampling path on fixed noise
    RngStream rng(12);
    flow::FlowArchitecture arch{2, 0, 3, {16, 16}, {}};
    flow::ConditionalFlow f(arch, rng);
    ad::Matrix noise = rng.normal_matrix(32, 2);
    ad::Matrix empty;
    auto rep = ad::finite_diff_check(
        [&] {
          auto s = f.sample_from_noise(noise, ad::Var::leaf(empty));
          return ad::mean(ad::square(s.samples));
        },
        f.params(), 1e-5, 1e-3);
    report("reparameterized sample gradient", rep.pass, rep.max_rel_error);
  }
  {  // DeepSets gradient
    RngStream rng(13);
    models::DeepSetsNet net(2, 5, rng);
    ad::Matrix set = rng.normal_matrix(5, 2);
    auto rep = ad::finite_diff_check(
        [&] { return ad::mean(ad::square(net.forward(ad::Var::leaf(set)))); },
        net.params(), 1e-5, 1e-4);
    report("deepsets gradient", rep.pass, rep.max_rel_error);
  }
  {  // invertibility + log-det consistency on random configurations
    RngStream rng(14);
    bool ok = true;
    double worst = 0;
    for (int k = 0; k < 20; ++k) {
      int d = 1 + static_cast<int>(rng.uniform() * 4);
      flow::FlowArchitecture arch{d, 0, 3, {8}, {}};
      flow::ConditionalFlow f(arch, rng);
      ad::Matrix u = rng.normal_matrix(8, d), empty;
      auto fwd = f.forward(ad::Var::leaf(u), ad::Var::leaf(empty));
      auto inv = f.inverse(fwd.x, ad::Var::leaf(empty));
      worst = std::max(worst, (inv.x.value() - u).cwiseAbs().maxCoeff());
      worst = std::max(
          worst, (fwd.logdet.value() + inv.logdet.value()).cwiseAbs().maxCoeff());
    }
    ok = worst < 1e-8;
    report("flow invertibility + logdet", ok, worst);
  }
  return failures ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential neural posterior/likelihood approximation toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir, runner = "analytic";
  int seeds = -1, jobs = static_cast<int>(std::thread::hardware_concurrency());
  int n_draws = 1000, K = 100, L = 20;
  std::vector<double> lambdas;

  auto add_common = [&](CLI::App* sub, bool need_config) {
    auto* opt = sub->add_option("--config", config_path, "config.json path");
    if (need_config) opt->required();
    sub->add_option("--out", out_dir, "output directory override");
    sub->add_option("--seeds", seeds, "number of seeds override");
    sub->add_option("--jobs", jobs, "worker pool size");
  };

  CLI::App* run = app.add_subcommand("run", "execute one experiment");
  add_common(run, true);

  CLI::App* sweep = app.add_subcommand("sweep", "lambda sweep (snpla only)");
  add_common(sweep, true);
  sweep->add_option("--lambdas", lambdas, "lambda values");

  CLI::App* timing = app.add_subcommand("timing", "posterior sampling run-time");
  add_common(timing, true);
  timing->add_option("--n-draws", n_draws, "posterior draws per repetition");

  CLI::App* sbc = app.add_subcommand("sbc", "simulation-based calibration");
  add_common(sbc, true);
  sbc->add_option("--replicates", K, "number of replicates K");
  sbc->add_option("--draws", L, "posterior draws per replicate L");
  sbc->add_option("--runner", runner, "analytic | method");

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "gradient and flow invariant battery");
  (void)gradcheck;

  CLI11_PARSE(app, argc, argv);

  if (gradcheck->parsed()) return cmd_gradcheck();

  io::ExperimentConfig cfg;
  try {
    cfg = io::load_config(config_path);
  } catch (const io::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  }
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  if (seeds > 0) cfg.n_seeds = seeds;

  try {
    if (run->parsed()) return cmd_run(cfg, jobs);
    if (sweep->parsed()) {
      if (lambdas.empty() && sweep->count("--lambdas") == 0)
        for (double l = 0.6; l < 0.951; l += 0.05) lambdas.push_back(l);
      return cmd_sweep(cfg, lambdas, jobs);
    }
    if (timing->parsed()) return cmd_timing(cfg, n_draws);
    if (sbc->parsed()) return cmd_sbc(cfg, K, L, runner);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
