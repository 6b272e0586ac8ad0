#include "snpla/experiments.hpp"

namespace snpla::experiments {

namespace {

Eigen::VectorXd flatten_rows(const ad::Matrix& m) {
  Eigen::VectorXd v(m.size());
  for (long i = 0; i < m.rows(); ++i)
    for (long j = 0; j < m.cols(); ++j) v(i * m.cols() + j) = m(i, j);
  return v;
}

}  // namespace

models::GaussianPosterior mvg_posterior_from_stats(int n,
                                                   const Eigen::Vector2d& xbar) {
  models::GaussianPrior prior = models::mvg_prior();
  Eigen::Matrix2d sigma_inv = models::mvg_sigma().inverse();
  Eigen::Matrix2d prior_inv = prior.cov().inverse();
  models::GaussianPosterior post;
  post.cov = (prior_inv + n * sigma_inv).inverse();
  post.mean = post.cov * (prior_inv * prior.mean() + n * sigma_inv * xbar);
  return post;
}

ExperimentSetup make_experiment(const io::ExperimentConfig& cfg) {
  ExperimentSetup setup;
  RngStream data_rng = RngStream::named(cfg.data_seed, "data");

  if (cfg.experiment.rfind("mvg", 0) == 0) {
    int n_obs = cfg.experiment == "mvg_summary" ? 100 : 5;
    bool summaries = cfg.experiment == "mvg_summary";

    auto prior = std::make_shared<models::Prior>(models::mvg_prior());
    Eigen::VectorXd theta_true = prior->sample(data_rng);
    setup.observed_raw = models::mvg_simulate(theta_true, n_obs, data_rng);

    setup.sim.name = cfg.experiment;
    setup.sim.theta_dim = 2;
    setup.sim.x_dim = summaries ? 5 : 2 * n_obs;
    setup.sim.prior = prior;
    setup.sim.theta_gt = theta_true;
    setup.sim.simulate = [n_obs, summaries](const Eigen::VectorXd& theta,
                                            RngStream& rng) {
      ad::Matrix raw = models::mvg_simulate(theta.head<2>(), n_obs, rng);
      return summaries ? models::mvg_summary_stats(raw) : flatten_rows(raw);
    };
    setup.x_obs = summaries ? Eigen::VectorXd(models::mvg_summary_stats(setup.observed_raw))
                            : flatten_rows(setup.observed_raw);

    models::GaussianPosterior post = models::mvg_analytic_posterior(setup.observed_raw);
    metrics::GaussianSummary analytic;
    analytic.mean = post.mean;
    analytic.cov = post.cov;
    analytic.n_samples = n_obs;
    setup.analytic = analytic;
    setup.primary_metric = "kl_to_analytic";
    setup.eval = [analytic](const ad::Matrix& samples) {
      std::map<std::string, double> m;
      m["kl_to_analytic"] = metrics::kl_to_analytic(samples, analytic);
      return m;
    };
    return setup;
  }

  if (cfg.experiment == "two_moons") {
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(2, -2.0);
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(2, 2.0);
    auto prior = std::make_shared<models::Prior>(models::BoxUniformPrior(lo, hi));
    models::TwoMoonsConfig tm{cfg.two_moons_radial_first};

    setup.sim.name = cfg.experiment;
    setup.sim.theta_dim = 2;
    setup.sim.x_dim = 2;
    setup.sim.prior = prior;
    setup.sim.simulate = [tm](const Eigen::VectorXd& theta, RngStream& rng) {
      return Eigen::VectorXd(models::two_moons_simulate(theta.head<2>(), rng, tm));
    };
    setup.x_obs = Eigen::Vector2d::Zero();

    RngStream ref_rng = RngStream::named(cfg.data_seed, "reference");
    setup.reference_samples = models::two_moons_reference_sample(1000, ref_rng, 0.01, tm);
    setup.primary_metric = "w1";
    ad::Matrix ref = setup.reference_samples;
    setup.eval = [ref](const ad::Matrix& samples) {
      std::map<std::string, double> m;
      long n = std::min<long>(samples.rows(), ref.rows());
      m["w1"] = metrics::wasserstein1(samples.topRows(n), ref.topRows(n));
      auto [f1, f2] = metrics::mode_coverage(samples);
      m["mode_pos_frac"] = f1;
      m["mode_neg_frac"] = f2;
      return m;
    };
    return setup;
  }

  if (cfg.experiment == "lotka_volterra") {
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(4, -5.0);
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(4, 2.0);
    auto prior = std::make_shared<models::Prior>(models::BoxUniformPrior(lo, hi));

    auto standardizer = std::make_shared<models::PilotStandardizer>();
    RngStream pilot_rng = RngStream::named(cfg.data_seed, "pilot");
    ad::Matrix pilot(1000, 9);
    for (int i = 0; i < 1000; ++i) {
      Eigen::VectorXd theta = prior->sample(pilot_rng);
      auto path = models::lv_gillespie_simulate(theta.head<4>(), pilot_rng);
      pilot.row(i) = models::lv_summary_stats(path).transpose();
    }
    standardizer->fit(pilot);
    setup.standardizer = standardizer;

    setup.sim.name = cfg.experiment;
    setup.sim.theta_dim = 4;
    setup.sim.x_dim = 9;
    setup.sim.prior = prior;
    Eigen::VectorXd theta_gt = models::lv_theta_gt();
    setup.sim.theta_gt = theta_gt;
    setup.sim.simulate = [standardizer](const Eigen::VectorXd& theta, RngStream& rng) {
      auto path = models::lv_gillespie_simulate(theta.head<4>(), rng);
      return standardizer->transform(models::lv_summary_stats(path));
    };
    auto obs_path = models::lv_gillespie_simulate(theta_gt.head<4>(), data_rng);
    setup.x_obs = standardizer->transform(models::lv_summary_stats(obs_path));

    setup.primary_metric = "neg_log_pdf_at_truth";
    setup.eval = [theta_gt](const ad::Matrix& samples) {
      std::map<std::string, double> m;
      m["neg_log_pdf_at_truth"] = metrics::neg_log_pdf_at_truth(samples, theta_gt);
      return m;
    };
    return setup;
  }

  throw std::invalid_argument("make_experiment: unknown experiment " + cfg.experiment);
}

}  // namespace snpla::experiments
