#include "snpla/models.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>

namespace snpla::models {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kLvVarFloor = 1e-10;
}  // namespace

BoxUniformPrior::BoxUniformPrior(Eigen::VectorXd lower, Eigen::VectorXd upper)
    : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.size() != upper_.size())
    throw std::invalid_argument("BoxUniformPrior: bound size mismatch");
  for (int j = 0; j < lower_.size(); ++j)
    if (lower_(j) >= upper_(j))
      throw std::invalid_argument("BoxUniformPrior: lower >= upper at " +
                                  std::to_string(j));
  log_inside_ = -(upper_ - lower_).array().log().sum();
}

Eigen::VectorXd BoxUniformPrior::sample(RngStream& rng) const {
  return rng.uniform_vector(lower_, upper_);
}

bool BoxUniformPrior::in_support(const Eigen::VectorXd& theta) const {
  for (int j = 0; j < lower_.size(); ++j)
    if (theta(j) < lower_(j) || theta(j) > upper_(j)) return false;
  return true;
}

double BoxUniformPrior::log_prob(const Eigen::VectorXd& theta) const {
  return in_support(theta) ? log_inside_
                           : -std::numeric_limits<double>::infinity();
}

GaussianPrior::GaussianPrior(Eigen::VectorXd mean, Matrix cov)
    : mean_(std::move(mean)), cov_(std::move(cov)) {
  Eigen::LLT<Matrix> llt(cov_);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("GaussianPrior: covariance not positive definite");
  chol_ = llt.matrixL();
  cov_inv_ = llt.solve(Matrix::Identity(cov_.rows(), cov_.cols()));
  double logdet = 2.0 * chol_.diagonal().array().log().sum();
  log_norm_ = -0.5 * (mean_.size() * kLog2Pi + logdet);
}

Eigen::VectorXd GaussianPrior::sample(RngStream& rng) const {
  Eigen::VectorXd z(mean_.size());
  for (int j = 0; j < z.size(); ++j) z(j) = rng.normal();
  return mean_ + chol_ * z;
}

double GaussianPrior::log_prob(const Eigen::VectorXd& theta) const {
  Eigen::VectorXd d = theta - mean_;
  return log_norm_ - 0.5 * d.dot(cov_inv_ * d);
}

Var GaussianPrior::log_prob_var(const Var& theta) const {
  Var mu_row = Var::leaf(Matrix(mean_.transpose()));
  Var diff = ad::sub(theta, mu_row);
  Var quad = ad::rowsum(ad::mul(ad::matmul(diff, Var::leaf(cov_inv_)), diff));
  return ad::shift(ad::scale(quad, -0.5), log_norm_);
}

Eigen::VectorXd Prior::sample(RngStream& rng) const {
  return box_ ? box_->sample(rng) : gauss_->sample(rng);
}

double Prior::log_prob(const Eigen::VectorXd& theta) const {
  return box_ ? box_->log_prob(theta) : gauss_->log_prob(theta);
}

std::function<Var(const Var&)> Prior::log_prob_fn() const {
  if (box_) {
    double c = box_->log_density_inside();
    return [c](const Var& theta) {
      return Var::leaf(Matrix::Constant(theta.rows(), 1, c));
    };
  }
  GaussianPrior g = *gauss_;
  return [g](const Var& theta) { return g.log_prob_var(theta); };
}

// ---------------------------------------------------------------------------

Matrix mvg_sigma() {
  Matrix s(2, 2);
  s << 1.3862, 1.4245, 1.4245, 1.5986;
  return s;
}

GaussianPrior mvg_prior() {
  return GaussianPrior(Eigen::Vector2d::Zero(), 5.0 * Matrix::Identity(2, 2));
}

Matrix mvg_simulate(const Eigen::Vector2d& mu, int n_obs, RngStream& rng) {
  static const Matrix chol = Eigen::LLT<Matrix>(mvg_sigma()).matrixL();
  Matrix out(n_obs, 2);
  for (int i = 0; i < n_obs; ++i) {
    Eigen::Vector2d z(rng.normal(), rng.normal());
    out.row(i) = (mu + chol * z).transpose();
  }
  return out;
}

Eigen::VectorXd mvg_summary_stats(const Matrix& data) {
  long n = data.rows();
  if (n < 2) throw std::invalid_argument("mvg_summary_stats: need n >= 2 rows");
  Eigen::Vector2d mean = data.colwise().mean();
  Matrix centered = data.rowwise() - mean.transpose();
  double inv = 1.0 / static_cast<double>(n - 1);
  Eigen::VectorXd s(5);
  s << mean(0), mean(1), centered.col(0).squaredNorm() * inv,
      centered.col(1).squaredNorm() * inv,
      centered.col(0).dot(centered.col(1)) * inv;
  return s;
}

GaussianPosterior mvg_analytic_posterior(const Matrix& x_obs) {
  GaussianPrior prior = mvg_prior();
  long n = x_obs.rows();
  if (n == 0)
    return {prior.mean(), prior.cov()};
  Matrix prior_prec = prior.cov().inverse();
  Matrix like_prec = mvg_sigma().inverse();
  Eigen::Vector2d xbar = x_obs.colwise().mean();
  Matrix post_cov = (prior_prec + static_cast<double>(n) * like_prec).inverse();
  Eigen::Vector2d post_mean =
      post_cov * (prior_prec * prior.mean() + static_cast<double>(n) * like_prec * xbar);
  return {post_mean, post_cov};
}

// ---------------------------------------------------------------------------

Eigen::Vector2d two_moons_simulate(const Eigen::Vector2d& theta, RngStream& rng,
                                   const TwoMoonsConfig& cfg) {
  constexpr double half_pi = std::numbers::pi / 2.0;
  double a = rng.uniform(-half_pi, half_pi);
  double r = 1.0 + 0.1 * rng.normal();
  Eigen::Vector2d p;
  if (cfg.radial_first)
    p << r * std::cos(a) + 1.0, r * std::sin(a);
  else
    p << std::cos(a) + 1.0, r * std::sin(a);
  constexpr double inv_sqrt2 = std::numbers::sqrt2 / 2.0;
  Eigen::Vector2d q(-std::abs(theta(0) + theta(1)) * inv_sqrt2,
                    (-theta(0) + theta(1)) * inv_sqrt2);
  return p + q;
}

Matrix two_moons_reference_sample(int n, RngStream& rng, double eps,
                                  const TwoMoonsConfig& cfg) {
  BoxUniformPrior prior(Eigen::Vector2d(-2, -2), Eigen::Vector2d(2, 2));
  Matrix out(n, 2);
  long accepted = 0, attempts = 0;
  while (accepted < n) {
    Eigen::VectorXd theta = prior.sample(rng);
    Eigen::Vector2d x = two_moons_simulate(theta, rng, cfg);
    ++attempts;
    if (x.norm() < eps) out.row(accepted++) = theta.transpose();
    if (attempts > 1000000 && static_cast<double>(accepted) / attempts < 1e-6)
      throw std::runtime_error(
          "two_moons_reference_sample: acceptance rate below 1e-6 (" +
          std::to_string(accepted) + "/" + std::to_string(attempts) + ")");
  }
  return out;
}

// ---------------------------------------------------------------------------

LvPath lv_gillespie_simulate(const Eigen::Vector4d& theta, RngStream& rng) {
  constexpr double horizon = 30.0, dt_grid = 0.2;
  Eigen::Vector4d rate_const = theta.array().exp();

  LvPath path;
  path.predators = Eigen::VectorXd::Zero(kLvGridPoints);
  path.prey = Eigen::VectorXd::Zero(kLvGridPoints);

  double x = 50, y = 100;  // predators, prey
  double t = 0;
  int grid = 0;
  auto record_until = [&](double up_to, double xv, double yv) {
    while (grid < kLvGridPoints && grid * dt_grid <= up_to + 1e-9) {
      path.predators(grid) = xv;
      path.prey(grid) = yv;
      ++grid;
    }
  };

  while (grid < kLvGridPoints) {
    double r1 = rate_const(0) * x * y;  // predator birth
    double r2 = rate_const(1) * x;      // predator death
    double r3 = rate_const(2) * y;      // prey birth
    double r4 = rate_const(3) * x * y;  // prey death
    double total = r1 + r2 + r3 + r4;
    if (total <= 0 || !std::isfinite(total)) {
      record_until(horizon, x, y);  // absorbing state, hold current values
      break;
    }
    double u = rng.uniform();
    double dt = -std::log(std::max(u, 1e-300)) / total;
    record_until(std::min(t + dt, horizon), x, y);
    t += dt;
    if (t > horizon) break;
    double pick = rng.uniform() * total;
    if (pick < r1)
      x += 1;
    else if (pick < r1 + r2)
      x -= 1;
    else if (pick < r1 + r2 + r3)
      y += 1;
    else
      y -= 1;
    if (++path.events >= kLvMaxEvents) {
      path.truncated = true;  // zero-fill the rest of the grid
      break;
    }
  }
  return path;
}

namespace {

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double ma = a.mean(), mb = b.mean();
  Eigen::ArrayXd da = a.array() - ma, db = b.array() - mb;
  double denom = std::sqrt(da.square().sum() * db.square().sum());
  if (denom <= 0) return 0.0;
  return (da * db).sum() / denom;
}

double autocorr(const Eigen::VectorXd& z, int lag) {
  long n = z.size() - lag;
  return pearson(z.head(n), z.tail(n));
}

}  // namespace

Eigen::VectorXd lv_summary_stats(const LvPath& path) {
  const Eigen::VectorXd& x = path.predators;
  const Eigen::VectorXd& y = path.prey;
  if (x.size() < 3) throw std::invalid_argument("lv_summary_stats: series too short");

  auto series_stats = [](const Eigen::VectorXd& z, double out[4]) {
    double m = z.mean();
    double var = (z.array() - m).square().sum() / static_cast<double>(z.size() - 1);
    out[0] = m;
    if (var <= 0) {
      out[1] = std::log(kLvVarFloor);
      out[2] = out[3] = 0.0;
    } else {
      out[1] = std::log(var);
      out[2] = autocorr(z, 1);
      out[3] = autocorr(z, 2);
    }
  };
  double sx[4], sy[4];
  series_stats(x, sx);
  series_stats(y, sy);

  Eigen::VectorXd s(9);
  s << sx[0], sy[0], sx[1], sy[1], sx[2], sx[3], sy[2], sy[3], pearson(x, y);
  return s;
}

// ---------------------------------------------------------------------------

void PilotStandardizer::fit(const Matrix& pilot_rows) {
  if (fitted_) throw std::logic_error("PilotStandardizer: already fitted");
  long n = pilot_rows.rows();
  if (n < 100)
    throw std::invalid_argument("PilotStandardizer: need >= 100 pilot samples");
  long trim = static_cast<long>(std::floor(0.0125 * static_cast<double>(n)));
  long kept = n - 2 * trim;

  mean_.resize(pilot_rows.cols());
  std_.resize(pilot_rows.cols());
  std::vector<double> col(n);
  for (int j = 0; j < pilot_rows.cols(); ++j) {
    for (long i = 0; i < n; ++i) col[i] = pilot_rows(i, j);
    std::sort(col.begin(), col.end());
    double sum = 0;
    for (long i = trim; i < n - trim; ++i) sum += col[i];
    double m = sum / static_cast<double>(kept);
    double sq = 0;
    for (long i = trim; i < n - trim; ++i) sq += (col[i] - m) * (col[i] - m);
    double sd = std::sqrt(sq / static_cast<double>(kept - 1));
    if (sd <= 0) {
      std::cerr << "PilotStandardizer: zero trimmed std in coordinate " << j
                << ", replacing with 1\n";
      sd = 1.0;
    }
    mean_(j) = m;
    std_(j) = sd;
  }
  fitted_ = true;
}

Eigen::VectorXd PilotStandardizer::transform(const Eigen::VectorXd& summary) const {
  if (!fitted_) throw std::logic_error("PilotStandardizer: not fitted");
  return (summary - mean_).cwiseQuotient(std_);
}

Matrix PilotStandardizer::transform_rows(const Matrix& rows) const {
  if (!fitted_) throw std::logic_error("PilotStandardizer: not fitted");
  return (rows.rowwise() - mean_.transpose()).array().rowwise() /
         std_.transpose().array();
}

// ---------------------------------------------------------------------------

DeepSetsNet::DeepSetsNet(int element_dim, int n_summaries, RngStream& rng)
    : out_dim_(n_summaries) {
  constexpr int w = 32;
  auto init = [&](int rows, int cols) {
    return Matrix(rng.normal_matrix(rows, cols) / std::sqrt(double(rows)));
  };
  phi_w1_ = params_.add("phi.W0", init(element_dim, w));
  phi_b1_ = params_.add("phi.b0", Matrix::Zero(1, w));
  phi_w2_ = params_.add("phi.W1", init(w, w));
  phi_b2_ = params_.add("phi.b1", Matrix::Zero(1, w));
  rho_w1_ = params_.add("rho.W0", init(w, w));
  rho_b1_ = params_.add("rho.b0", Matrix::Zero(1, w));
  rho_w2_ = params_.add("rho.W1", init(w, n_summaries));
  rho_b2_ = params_.add("rho.b1", Matrix::Zero(1, n_summaries));
}

namespace {

// Lexicographic row order. Summation order inside the pooling reduction then
// no longer depends on how the caller happened to order the set, which makes
// permutation invariance bit-exact rather than up-to-rounding.
std::vector<long> lex_row_order(const Matrix& rows, long first, long count) {
  std::vector<long> idx(count);
  std::iota(idx.begin(), idx.end(), first);
  std::sort(idx.begin(), idx.end(), [&](long a, long b) {
    for (long j = 0; j < rows.cols(); ++j) {
      if (rows(a, j) < rows(b, j)) return true;
      if (rows(a, j) > rows(b, j)) return false;
    }
    return false;
  });
  return idx;
}

}  // namespace

Var DeepSetsNet::forward(const Var& set) const {
  std::vector<long> order = lex_row_order(set.value(), 0, set.rows());
  Matrix perm = Matrix::Zero(set.rows(), set.rows());
  for (long i = 0; i < set.rows(); ++i) perm(i, order[i]) = 1.0;
  Var canon = ad::matmul(Var::leaf(perm), set);
  Var h = ad::tanh(ad::add(ad::matmul(canon, phi_w1_), phi_b1_));
  h = ad::tanh(ad::add(ad::matmul(h, phi_w2_), phi_b2_));
  Var pooled = ad::colsum(h);  // sum pooling, permutation invariant
  Var r = ad::tanh(ad::add(ad::matmul(pooled, rho_w1_), rho_b1_));
  return ad::add(ad::matmul(r, rho_w2_), rho_b2_);
}

Eigen::VectorXd DeepSetsNet::forward_values(const Matrix& set) const {
  return forward(Var::leaf(set)).value().row(0).transpose();
}

Var DeepSetsNet::forward_batch(const Matrix& stacked_elements, int set_size) const {
  long total = stacked_elements.rows();
  if (set_size < 1 || total % set_size != 0)
    throw std::invalid_argument("DeepSetsNet::forward_batch: bad set size");
  long n_sets = total / set_size;
  Matrix canon(total, stacked_elements.cols());
  for (long s = 0; s < n_sets; ++s) {
    std::vector<long> order = lex_row_order(stacked_elements, s * set_size, set_size);
    for (int i = 0; i < set_size; ++i)
      canon.row(s * set_size + i) = stacked_elements.row(order[i]);
  }
  Var h = ad::tanh(ad::add(ad::matmul(Var::leaf(canon), phi_w1_), phi_b1_));
  h = ad::tanh(ad::add(ad::matmul(h, phi_w2_), phi_b2_));
  Matrix pool = Matrix::Zero(n_sets, total);  // group-sum selector
  for (long s = 0; s < n_sets; ++s) pool.block(s, s * set_size, 1, set_size).setOnes();
  Var pooled = ad::matmul(Var::leaf(pool), h);
  Var r = ad::tanh(ad::add(ad::matmul(pooled, rho_w1_), rho_b1_));
  return ad::add(ad::matmul(r, rho_w2_), rho_b2_);
}

}  // namespace snpla::models
