// Acceptance suite: one test case per criterion, each printing a single
// CRITERION n: PASS/FAIL line with its pinned thresholds.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <thread>

#include "snpla/experiments.hpp"
#include "snpla/inference.hpp"
#include "snpla/io.hpp"
#include "snpla/metrics.hpp"

using namespace snpla;
using ad::Matrix;
using ad::Var;

namespace {

void verdict(int criterion, bool ok, const std::string& detail) {
  std::cout << "CRITERION " << criterion << ": " << (ok ? "PASS" : "FAIL") << "  ("
            << detail << ")\n"
            << std::flush;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void perturb_params(ad::ParameterStore& store, RngStream& rng, double scale) {
  Eigen::VectorXd v = store.flatten_values();
  for (long i = 0; i < v.size(); ++i) v(i) += scale * rng.normal();
  store.unflatten_values(v);
}

io::ExperimentConfig base_config(const std::string& experiment,
                                 const std::string& method) {
  io::ExperimentConfig cfg;
  cfg.experiment = experiment;
  cfg.method = method;
  cfg.data_seed = 2023;
  io::apply_experiment_defaults(cfg);
  return cfg;
}

template <typename F>
std::vector<std::invoke_result_t<F, int>> parallel_seeds(int n, F run) {
  std::vector<std::invoke_result_t<F, int>> out(n);
  std::vector<std::thread> threads;
  for (int s = 0; s < n; ++s) threads.emplace_back([&, s] { out[s] = run(s); });
  for (auto& t : threads) t.join();
  return out;
}

}  // namespace

TEST_CASE("criterion1 engine property suite") {
  bool ok = true;
  double worst_fd = 0, worst_inv = 0, worst_norm = 0;

  {  // finite-difference checks: dense net, flow forward KL, sampling path
    RngStream rng(101);
    ad::ParameterStore store;
    Var w1 = store.add("w1", rng.normal_matrix(4, 16));
    Var b1 = store.add("b1", rng.normal_matrix(1, 16));
    Var w2 = store.add("w2", rng.normal_matrix(16, 1));
    Matrix xval = rng.normal_matrix(8, 4);
    auto rep = ad::finite_diff_check(
        [&] {
          Var h = ad::tanh(ad::matmul(Var::leaf(xval), w1) + b1);
          return ad::mean(ad::square(ad::matmul(h, w2)));
        },
        store, 1e-5, 1e-4);
    ok &= rep.pass;
    worst_fd = std::max(worst_fd, rep.max_rel_error);

    flow::ConditionalFlow f({2, 2, 3, {16, 16}, {}}, rng);
    Matrix wt = rng.normal_matrix(64, 2), wc = rng.normal_matrix(64, 2);
    ad::Adam opt;
    for (int i = 0; i < 5; ++i) {
      f.params().zero_grad();
      ad::backward(flow::forward_kl_loss(f, wt, wc));
      opt.step(f.params(), 1e-3);
    }
    Matrix t = rng.normal_matrix(16, 2), c = rng.normal_matrix(16, 2);
    rep = ad::finite_diff_check([&] { return flow::forward_kl_loss(f, t, c); },
                                f.params(), 1e-5, 1e-4);
    ok &= rep.pass;
    worst_fd = std::max(worst_fd, rep.max_rel_error);

    Matrix noise = rng.normal_matrix(32, 2), empty;
    rep = ad::finite_diff_check(
        [&] {
          auto s = f.sample_from_noise(noise, Var::leaf(c.topRows(1)));
          return ad::mean(ad::square(s.samples));
        },
        f.params(), 1e-5, 1e-4);
    ok &= rep.pass;
    worst_fd = std::max(worst_fd, rep.max_rel_error);
  }

  {  // 100 random configurations: invertibility, log-det, triangularity
    RngStream rng(102);
    for (int k = 0; k < 100; ++k) {
      int d = 1 + static_cast<int>(rng.uniform() * 5);
      int c = static_cast<int>(rng.uniform() * 3);
      flow::ConditionalFlow f(
          {d, c, 1 + static_cast<int>(rng.uniform() * 4), {16}, {}}, rng);
      perturb_params(f.params(), rng, 0.3);
      Matrix u = rng.normal_matrix(4, d);
      Matrix ctx = c ? rng.normal_matrix(4, c) : Matrix();
      auto fwd = f.forward(Var::leaf(u), Var::leaf(ctx));
      auto inv = f.inverse(fwd.x, Var::leaf(ctx));
      worst_inv = std::max(worst_inv, (inv.x.value() - u).cwiseAbs().maxCoeff());
      worst_inv = std::max(
          worst_inv, (fwd.logdet.value() + inv.logdet.value()).cwiseAbs().maxCoeff());
    }
    ok &= worst_inv < 1e-8;

    ad::ParameterStore store;
    flow::MadeConditioner cond(4, 2, {32, 32}, store, "made", rng);
    perturb_params(store, rng, 0.4);
    Matrix xval = rng.normal_matrix(1, 4), cval = rng.normal_matrix(1, 2);
    for (int out = 0; out < 4; ++out) {
      Var x = Var::leaf(xval, true);
      auto [mu, s] = cond.shift_and_log_scale(x, Var::leaf(cval));
      ad::backward(ad::sum(ad::slice_cols(mu, out, 1) + ad::slice_cols(s, out, 1)));
      for (int in = out; in < 4; ++in) ok &= x.grad()(0, in) == 0.0;
    }
  }

  {  // 1D normalization by quadrature
    RngStream rng(103);
    flow::ConditionalFlow f({1, 0, 3, {16}, {}}, rng);
    perturb_params(f.params(), rng, 0.1);
    Matrix empty;
    double h = 0.01, total = 0;
    int n = static_cast<int>(60.0 / h) + 1;
    Matrix grid(n, 1);
    for (int i = 0; i < n; ++i) grid(i, 0) = -30.0 + i * h;
    Var lp = f.log_prob(Var::leaf(grid), Var::leaf(empty));
    for (int i = 0; i < n; ++i) total += std::exp(lp.value()(i, 0)) * h;
    worst_norm = std::abs(total - 1.0);
    ok &= worst_norm < 1e-3;
  }

  verdict(1, ok,
          "max fd rel err " + std::to_string(worst_fd) + ", max inv err " +
              std::to_string(worst_inv) + ", norm err " + std::to_string(worst_norm));
  CHECK(ok);
}

TEST_CASE("criterion2 mvg summary statistics desk scale") {
  auto cfg = base_config("mvg_summary", "snpla");
  auto setup = experiments::make_experiment(cfg);
  const int n_seeds = 5;
  auto kls = parallel_seeds(n_seeds, [&](int s) {
    inference::SnplaConfig c = cfg.snpla;
    c.seed = static_cast<std::uint64_t>(s);
    auto result = inference::snpla_run(c, setup.sim, setup.x_obs);
    std::vector<double> per_round;
    for (const auto& rec : result.rounds)
      per_round.push_back(metrics::kl_to_analytic(rec.posterior_samples,
                                                  *setup.analytic));
    return per_round;
  });

  std::vector<double> med_per_round;
  for (int r = 0; r < cfg.snpla.rounds; ++r) {
    std::vector<double> v;
    for (const auto& seed_kls : kls) v.push_back(seed_kls[r]);
    med_per_round.push_back(median(v));
  }
  double first = med_per_round.front(), last = med_per_round.back();
  bool ok = (first / last >= 5.0) && (last < 1.0);
  std::string detail = "median KL round1=" + std::to_string(first) +
                       " round10=" + std::to_string(last) +
                       " factor=" + std::to_string(first / last);
  verdict(2, ok, detail);
  CHECK(first / last >= 5.0);
  CHECK(last < 1.0);
}

TEST_CASE("criterion3 learned likelihood quality") {
  auto cfg = base_config("mvg_summary", "snpla");
  auto setup = experiments::make_experiment(cfg);
  inference::SnplaConfig c = cfg.snpla;
  c.seed = 11;
  auto result = inference::snpla_run(c, setup.sim, setup.x_obs);

  // theta draws from the analytic posterior
  const int n = 1000;
  RngStream rng = RngStream::named(cfg.data_seed, "likelihood-eval");
  Eigen::LLT<Matrix> llt(setup.analytic->cov);
  Matrix thetas(n, 2);
  for (int i = 0; i < n; ++i) {
    Eigen::Vector2d z(rng.normal(), rng.normal());
    thetas.row(i) =
        (setup.analytic->mean + Matrix(llt.matrixL()) * z).transpose();
  }

  Matrix flow_x(n, 5), sim_x1(n, 5), sim_x2(n, 5);
  for (int i = 0; i < n; ++i) {
    auto s = result.likelihood_flow->sample(1, Var::leaf(Matrix(thetas.row(i))), rng);
    flow_x.row(i) = s.samples.value();
    sim_x1.row(i) = setup.sim.simulate(thetas.row(i).transpose(), rng).transpose();
    sim_x2.row(i) = setup.sim.simulate(thetas.row(i).transpose(), rng).transpose();
  }

  bool means_ok = true;
  double worst_z = 0;
  for (int j = 0; j < 5; ++j) {
    double mf = flow_x.col(j).mean(), ms = sim_x1.col(j).mean();
    double vf = (flow_x.col(j).array() - mf).square().sum() / (n - 1);
    double vs = (sim_x1.col(j).array() - ms).square().sum() / (n - 1);
    double se = std::sqrt(vf / n + vs / n);
    double z = std::abs(mf - ms) / se;
    worst_z = std::max(worst_z, z);
    means_ok &= z < 3.0;
  }
  double w_fs = metrics::wasserstein1(flow_x, sim_x1);
  double w_ss = metrics::wasserstein1(sim_x1, sim_x2);
  bool w1_ok = w_fs < 2.0 * w_ss;
  verdict(3, means_ok && w1_ok,
          "worst mean z=" + std::to_string(worst_z) + ", W1(flow,sim)=" +
              std::to_string(w_fs) + " vs 2*W1(sim,sim)=" + std::to_string(2 * w_ss));
  CHECK(means_ok);
  CHECK(w1_ok);
}

TEST_CASE("criterion4 two moons bimodality") {
  auto cfg = base_config("two_moons", "snpla");
  auto setup = experiments::make_experiment(cfg);
  const int n_seeds = 5;

  struct SeedResult {
    double lo_frac = 0, w1 = 0;
    bool ok = false;
  };
  auto snpla_results = parallel_seeds(n_seeds, [&](int s) {
    SeedResult out;
    inference::SnplaConfig c = cfg.snpla;
    c.seed = static_cast<std::uint64_t>(s);
    auto result = inference::snpla_run(c, setup.sim, setup.x_obs);
    const Matrix& samples = result.rounds.back().posterior_samples;
    auto [f1, f2] = metrics::mode_coverage(samples);
    out.lo_frac = std::min(f1, f2);
    out.w1 = metrics::wasserstein1(samples, setup.reference_samples);
    out.ok = true;
    return out;
  });
  auto snl_results = parallel_seeds(n_seeds, [&](int s) {
    SeedResult out;
    inference::SnlConfig c = base_config("two_moons", "snl").snl;
    c.seed = static_cast<std::uint64_t>(s);
    try {
      auto result = inference::snl_run(c, setup.sim, setup.x_obs);
      const Matrix& samples = result.rounds.back().posterior_samples;
      auto [f1, f2] = metrics::mode_coverage(samples);
      out.lo_frac = std::min(f1, f2);
      out.ok = true;
    } catch (const std::exception&) {
      out.lo_frac = 0;  // a failed SNL run certainly did not cover both modes
    }
    return out;
  });

  int snpla_cover = 0, snl_cover = 0;
  std::vector<double> w1s;
  for (const auto& r : snpla_results) {
    if (r.lo_frac >= 0.2 && r.lo_frac <= 0.8) ++snpla_cover;
    w1s.push_back(r.w1);
  }
  for (const auto& r : snl_results)
    if (r.lo_frac >= 0.2 && r.lo_frac <= 0.8) ++snl_cover;

  // prior-sample W1 baseline
  RngStream prior_rng = RngStream::named(cfg.data_seed, "prior-baseline");
  Matrix prior_draws(setup.reference_samples.rows(), 2);
  for (long i = 0; i < prior_draws.rows(); ++i)
    prior_draws.row(i) = setup.sim.prior->sample(prior_rng).transpose();
  double w1_prior = metrics::wasserstein1(prior_draws, setup.reference_samples);
  double w1_med = median(w1s);

  bool ok = snpla_cover >= 4 && snl_cover <= 2 && w1_med * 3.0 <= w1_prior;
  verdict(4, ok,
          "snpla both-modes " + std::to_string(snpla_cover) + "/5, snl " +
              std::to_string(snl_cover) + "/5, median W1 " + std::to_string(w1_med) +
              " vs prior W1 " + std::to_string(w1_prior));
  CHECK(snpla_cover >= 4);
  CHECK(snl_cover <= 2);
  CHECK(w1_med * 3.0 <= w1_prior);
}

TEST_CASE("criterion5 lotka volterra") {
  auto cfg = base_config("lotka_volterra", "snpla");
  cfg.snpla.n_post = 10000;
  auto setup = experiments::make_experiment(cfg);
  const int n_seeds = 3;

  struct SeedResult {
    std::vector<double> nlp;
    bool inside = true;
    double post_pred = 0, prior_pred = 0;
  };
  auto results = parallel_seeds(n_seeds, [&](int s) {
    SeedResult out;
    inference::SnplaConfig c = cfg.snpla;
    c.seed = static_cast<std::uint64_t>(s);
    auto result = inference::snpla_run(c, setup.sim, setup.x_obs);
    for (const auto& rec : result.rounds)
      out.nlp.push_back(
          metrics::neg_log_pdf_at_truth(rec.posterior_samples, *setup.sim.theta_gt));
    const Matrix& final_samples = result.rounds.back().posterior_samples;
    out.inside = (final_samples.array() > -5.0).all() &&
                 (final_samples.array() < 2.0).all();

    RngStream pred_rng = RngStream::named(c.seed, "predictive");
    std::vector<double> post_d, prior_d;
    for (int i = 0; i < 100; ++i) {
      Eigen::VectorXd th_post = final_samples.row(i).transpose();
      post_d.push_back(
          (setup.sim.simulate(th_post, pred_rng) - setup.x_obs).norm());
      Eigen::VectorXd th_prior = setup.sim.prior->sample(pred_rng);
      prior_d.push_back(
          (setup.sim.simulate(th_prior, pred_rng) - setup.x_obs).norm());
    }
    out.post_pred = median(post_d);
    out.prior_pred = median(prior_d);
    return out;
  });

  bool monotone = true, inside = true;
  for (int r = 1; r < cfg.snpla.rounds; ++r) {
    std::vector<double> prev, cur;
    for (const auto& sr : results) {
      prev.push_back(sr.nlp[r - 1]);
      cur.push_back(sr.nlp[r]);
    }
    if (median(cur) > median(prev)) monotone = false;
  }
  std::vector<double> post_meds, prior_meds;
  for (const auto& sr : results) {
    inside &= sr.inside;
    post_meds.push_back(sr.post_pred);
    prior_meds.push_back(sr.prior_pred);
  }
  bool predictive_ok = median(post_meds) < median(prior_meds);

  std::vector<double> final_nlp;
  for (const auto& sr : results) final_nlp.push_back(sr.nlp.back());
  verdict(5, monotone && inside && predictive_ok,
          "median nlp monotone=" + std::to_string(monotone) + " final=" +
              std::to_string(median(final_nlp)) + ", inside box=" +
              std::to_string(inside) + ", post-pred " +
              std::to_string(median(post_meds)) + " < prior-pred " +
              std::to_string(median(prior_meds)));
  CHECK(monotone);
  CHECK(inside);
  CHECK(predictive_ok);
}

TEST_CASE("criterion6 sampling speed ratio") {
  auto cfg = base_config("mvg_summary", "snpla");
  // the criterion compares sampling mechanics, not posterior quality; a
  // short training run produces representative flows of the same size
  cfg.snpla.rounds = 2;
  cfg.snpla.n_sim_per_round = 1000;
  cfg.snpla.n_post = 4000;
  auto setup = experiments::make_experiment(cfg);
  inference::SnplaConfig c = cfg.snpla;
  c.seed = 21;
  auto snpla_result = inference::snpla_run(c, setup.sim, setup.x_obs);

  inference::SnlConfig lc = base_config("mvg_summary", "snl").snl;
  lc.rounds = 2;
  lc.n_sim_per_round = 1000;
  lc.seed = 21;
  auto snl_result = inference::snl_run(lc, setup.sim, setup.x_obs);

  Matrix x_obs_row = setup.x_obs.transpose();
  Matrix ctx = x_obs_row;
  auto synthetic_posterior = [&](const Matrix& thetas) {
    Eigen::VectorXd lp(thetas.rows());
    for (long i = 0; i < thetas.rows(); ++i) {
      Eigen::VectorXd th = thetas.row(i).transpose();
      lp(i) = setup.sim.prior->log_prob(th) +
              snl_result.likelihood_flow
                  ->log_prob(Var::leaf(x_obs_row),
                             Var::leaf(Matrix(th.transpose())))
                  .value()(0, 0);
    }
    return lp;
  };

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
  RngStream flow_rng = RngStream::named(1, "timing-flow");
  double t_snpla = median_of_5([&] {
    auto s = snpla_result.posterior_flow->sample(1000, Var::leaf(ctx), flow_rng);
    volatile double sink = s.samples.value()(0, 0);
    (void)sink;
  });
  RngStream mcmc_rng = RngStream::named(1, "timing-mcmc");
  inference::McmcConfig mcfg;
  mcfg.n_chains = 1;  // the classic single-chain SNL sampling protocol
  mcfg.thinning = inference::decorrelation_thinning(
      synthetic_posterior, 2, setup.sim.prior->gaussian().mean(), mcmc_rng);
  std::cout << "timing thinning factor: " << mcfg.thinning << '\n';
  double t_snl = median_of_5([&] {
    Matrix d = inference::mcmc_sample(synthetic_posterior, 2, 1000, mcfg,
                                      setup.sim.prior->gaussian().mean(), mcmc_rng);
    volatile double sink = d(0, 0);
    (void)sink;
  });

  double ratio = t_snl / t_snpla;
  bool ok = ratio >= 100.0 && t_snpla < 1.0;
  verdict(6, ok,
          "snpla " + std::to_string(t_snpla) + "s, snl " + std::to_string(t_snl) +
              "s, ratio " + std::to_string(ratio));
  CHECK(t_snpla < 1.0);
  CHECK(ratio >= 100.0);
}

TEST_CASE("criterion7 lambda sweep") {
  auto cfg = base_config("mvg_summary", "snpla");
  auto setup = experiments::make_experiment(cfg);
  std::vector<double> lambdas;
  for (double l = 0.6; l < 0.951; l += 0.05) lambdas.push_back(l);

  auto finals = parallel_seeds(static_cast<int>(lambdas.size()), [&](int i) {
    inference::SnplaConfig c = cfg.snpla;
    c.lambda = lambdas[i];
    c.seed = 7;
    auto result = inference::snpla_run(c, setup.sim, setup.x_obs);
    return metrics::kl_to_analytic(result.rounds.back().posterior_samples,
                                   *setup.analytic);
  });

  bool all_finite = true;
  double best = std::numeric_limits<double>::infinity(), worst = 0;
  std::string detail;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    all_finite &= std::isfinite(finals[i]);
    best = std::min(best, finals[i]);
    worst = std::max(worst, finals[i]);
    detail += (i ? " " : "") + std::to_string(finals[i]);
  }
  bool ok = all_finite && worst <= 5.0 * best;
  verdict(7, ok, "final KLs [" + detail + "], spread " + std::to_string(worst / best));
  CHECK(all_finite);
  CHECK(worst <= 5.0 * best);
}

TEST_CASE("criterion8 sbc oracle") {
  auto cfg = base_config("mvg_summary", "snpla");
  auto setup = experiments::make_experiment(cfg);
  auto runner = [](const Eigen::VectorXd& x, int L, RngStream& rng) {
    Eigen::Vector2d xbar(x(0), x(1));
    auto post = experiments::mvg_posterior_from_stats(100, xbar);
    Eigen::LLT<Eigen::Matrix2d> llt(post.cov);
    Matrix draws(L, 2);
    for (int i = 0; i < L; ++i) {
      Eigen::Vector2d z(rng.normal(), rng.normal());
      draws.row(i) = (post.mean + llt.matrixL() * z).transpose();
    }
    return draws;
  };
  RngStream rng = RngStream::named(cfg.data_seed, "sbc");
  auto result = metrics::sbc(runner, *setup.sim.prior, setup.sim.simulate, 100, 20,
                             rng);
  bool ok = true;
  std::string detail;
  for (long j = 0; j < result.histograms.rows(); ++j) {
    int in_band = 0;
    for (long b = 0; b < 21; ++b) {
      double c = result.histograms(j, b);
      if (c >= result.band_lower && c <= result.band_upper) ++in_band;
    }
    ok &= in_band >= 19;
    ok &= result.p_value[j] > 0.01;
    detail += "param" + std::to_string(j + 1) + " in-band " +
              std::to_string(in_band) + "/21 p=" + std::to_string(result.p_value[j]) +
              "  ";
  }
  verdict(8, ok, detail);
  CHECK(ok);
}

TEST_CASE("criterion9 metric oracles") {
  bool w1_ok = true;
  {
    RngStream rng(901);
    for (int trial = 0; trial < 40; ++trial) {
      int n = 2 + static_cast<int>(rng.uniform() * 7);
      Matrix a = rng.normal_matrix(n, 1 + trial % 3),
             b = rng.normal_matrix(n, 1 + trial % 3);
      double fast = metrics::wasserstein1(a, b);
      std::vector<int> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      double best = std::numeric_limits<double>::infinity();
      do {
        double tot = 0;
        for (int i = 0; i < n; ++i) tot += (a.row(i) - b.row(perm[i])).norm();
        best = std::min(best, tot / n);
      } while (std::next_permutation(perm.begin(), perm.end()));
      w1_ok &= std::abs(fast - best) < 1e-10;
    }
  }
  bool kl_ok = true;
  double worst_rel = 0;
  {
    RngStream rng(902);
    for (int pair = 0; pair < 20; ++pair) {
      int d = 2;
      Matrix a1 = rng.normal_matrix(d, d), a2 = rng.normal_matrix(d, d);
      Matrix s1 = a1 * a1.transpose() + Matrix::Identity(d, d);
      Matrix s2 = a2 * a2.transpose() + Matrix::Identity(d, d);
      Eigen::VectorXd m1(d), m2(d);
      for (int i = 0; i < d; ++i) {
        m1(i) = rng.normal();
        m2(i) = rng.normal();
      }
      double analytic = metrics::gaussian_kl(m1, s1, m2, s2);

      Eigen::LLT<Matrix> l1(s1), l2(s2);
      Matrix c1 = l1.matrixL();
      double logdet1 = 2.0 * c1.diagonal().array().log().sum();
      double logdet2 = 2.0 * Matrix(l2.matrixL()).diagonal().array().log().sum();
      double mc = 0;
      const int n = 1000000;
      for (int i = 0; i < n; ++i) {
        Eigen::VectorXd z(d);
        for (int k = 0; k < d; ++k) z(k) = rng.normal();
        Eigen::VectorXd x = m1 + c1 * z;
        double lp1 = -0.5 * (logdet1 + z.squaredNorm());
        Eigen::VectorXd d2 = x - m2;
        double lp2 = -0.5 * (logdet2 + d2.dot(l2.solve(d2)));
        mc += lp1 - lp2;
      }
      mc /= n;
      double rel = std::abs(mc - analytic) / std::max(std::abs(analytic), 1e-12);
      worst_rel = std::max(worst_rel, rel);
      kl_ok &= rel < 0.01;
    }
  }
  verdict(9, w1_ok && kl_ok,
          "W1 exact on all brute-force instances: " + std::to_string(w1_ok) +
              ", KL worst MC rel err " + std::to_string(worst_rel));
  CHECK(w1_ok);
  CHECK(kl_ok);
}
