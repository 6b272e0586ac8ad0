#include "snpla/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>

namespace snpla::metrics {

GaussianSummary fit_gaussian(const Matrix& samples) {
  long n = samples.rows();
  long d = samples.cols();
  if (n < d + 2)
    throw std::invalid_argument("fit_gaussian: need n >= d + 2 samples");
  GaussianSummary g;
  g.n_samples = n;
  g.mean = samples.colwise().mean();
  Matrix centered = samples.rowwise() - g.mean.transpose();
  g.cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  g.cov = 0.5 * (g.cov + g.cov.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(g.cov);
  if (es.eigenvalues().minCoeff() < 0) {
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    g.cov = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  }
  return g;
}

double gaussian_kl(const Eigen::VectorXd& m1, const Matrix& S1,
                   const Eigen::VectorXd& m2, const Matrix& S2) {
  long d = m1.size();
  Eigen::LLT<Matrix> llt2(S2);
  if (llt2.info() != Eigen::Success)
    throw std::runtime_error("gaussian_kl: second covariance is singular");
  Eigen::LLT<Matrix> llt1(S1);
  if (llt1.info() != Eigen::Success)
    throw std::runtime_error("gaussian_kl: first covariance is singular");
  double logdet1 = 2.0 * Matrix(llt1.matrixL()).diagonal().array().log().sum();
  double logdet2 = 2.0 * Matrix(llt2.matrixL()).diagonal().array().log().sum();
  Matrix S2inv_S1 = llt2.solve(S1);
  Eigen::VectorXd dm = m1 - m2;
  double quad = dm.dot(llt2.solve(dm));
  return 0.5 * (logdet2 - logdet1 + S2inv_S1.trace() - static_cast<double>(d) + quad);
}

double kl_to_analytic(const Matrix& samples, const GaussianSummary& analytic) {
  GaussianSummary fitted = fit_gaussian(samples);
  try {
    return gaussian_kl(analytic.mean, analytic.cov, fitted.mean, fitted.cov);
  } catch (const std::runtime_error&) {
    Matrix jittered =
        fitted.cov + 1e-8 * Matrix::Identity(fitted.cov.rows(), fitted.cov.cols());
    return gaussian_kl(analytic.mean, analytic.cov, fitted.mean, jittered);
  }
}

namespace {

// Shortest-augmenting-path linear assignment (Jonker-Volgenant style),
// O(n^3). Returns col4row: row i matched to column col4row[i].
std::vector<int> solve_assignment(const Matrix& cost) {
  int n = static_cast<int>(cost.rows());
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n, 0.0), v(n, 0.0), spc(n);
  std::vector<int> path(n, -1), col4row(n, -1), row4col(n, -1);
  std::vector<char> sr(n), sc(n);

  for (int cur_row = 0; cur_row < n; ++cur_row) {
    std::fill(sr.begin(), sr.end(), 0);
    std::fill(sc.begin(), sc.end(), 0);
    std::fill(spc.begin(), spc.end(), inf);
    double min_val = 0.0;
    int i = cur_row, sink = -1;
    while (sink == -1) {
      sr[i] = 1;
      double lowest = inf;
      int j_min = -1;
      for (int j = 0; j < n; ++j) {
        if (sc[j]) continue;
        double r = min_val + cost(i, j) - u[i] - v[j];
        if (r < spc[j]) {
          spc[j] = r;
          path[j] = i;
        }
        if (spc[j] < lowest || (spc[j] == lowest && row4col[j] == -1)) {
          lowest = spc[j];
          j_min = j;
        }
      }
      min_val = lowest;
      if (!std::isfinite(min_val))
        throw std::runtime_error("solve_assignment: infeasible cost matrix");
      sc[j_min] = 1;
      if (row4col[j_min] == -1)
        sink = j_min;
      else
        i = row4col[j_min];
    }
    u[cur_row] += min_val;
    for (int k = 0; k < n; ++k)
      if (sr[k] && k != cur_row) u[k] += min_val - spc[col4row[k]];
    for (int j = 0; j < n; ++j)
      if (sc[j]) v[j] -= min_val - spc[j];
    int j = sink;
    while (true) {
      int k = path[j];
      row4col[j] = k;
      std::swap(col4row[k], j);
      if (k == cur_row) break;
    }
  }
  return col4row;
}

}  // namespace

double wasserstein1(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("wasserstein1: sample sets must have equal shape");
  long n = a.rows();
  if (n == 0) throw std::invalid_argument("wasserstein1: empty sample sets");
  if (n > 2000) throw std::invalid_argument("wasserstein1: n capped at 2000");

  Matrix cost(n, n);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j)
      cost(i, j) = (a.row(i) - b.row(j)).norm();
  std::vector<int> match = solve_assignment(cost);
  double total = 0;
  for (long i = 0; i < n; ++i) total += cost(i, match[i]);
  return total / static_cast<double>(n);
}

double neg_log_pdf_at_truth(const Matrix& samples, const Eigen::VectorXd& theta_star) {
  GaussianSummary g = fit_gaussian(samples);
  long d = theta_star.size();
  Eigen::LLT<Matrix> llt(g.cov);
  if (llt.info() != Eigen::Success) {
    llt.compute(g.cov + 1e-8 * Matrix::Identity(d, d));
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("neg_log_pdf_at_truth: degenerate covariance");
  }
  double logdet = 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
  Eigen::VectorXd dm = theta_star - g.mean;
  double quad = dm.dot(llt.solve(dm));
  constexpr double kLog2Pi = 1.8378770664093453;
  return 0.5 * (static_cast<double>(d) * kLog2Pi + logdet + quad);
}

SbcResult sbc(
    const std::function<Matrix(const Eigen::VectorXd&, int, RngStream&)>&
        inference_runner,
    const models::Prior& prior,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&, RngStream&)>& simulate,
    int replicates, int draws_per_replicate, RngStream& rng) {
  if (replicates < 20) throw std::invalid_argument("sbc: need K >= 20 replicates");
  int L = draws_per_replicate;
  int d = prior.dim();

  SbcResult result;
  result.histograms = Matrix::Zero(d, L + 1);
  result.replicates = replicates;

  for (int k = 0; k < replicates; ++k) {
    RngStream rep_rng = rng.split(k);
    Eigen::VectorXd theta = prior.sample(rep_rng);
    Eigen::VectorXd x = simulate(theta, rep_rng);
    Matrix draws;
    try {
      draws = inference_runner(x, L, rep_rng);
    } catch (const std::exception&) {
      ++result.skipped;
      if (result.skipped > replicates / 5)
        throw std::runtime_error("sbc: more than 20% of replicates failed");
      continue;
    }
    for (int j = 0; j < d; ++j) {
      int rank = 0;
      for (int l = 0; l < L; ++l)
        if (draws(l, j) < theta(j)) ++rank;
      result.histograms(j, rank) += 1;
    }
  }

  int k_eff = replicates - result.skipped;
  double expected = static_cast<double>(k_eff) / (L + 1);
  boost::math::chi_squared chi2(L);
  for (int j = 0; j < d; ++j) {
    double stat = 0;
    for (int b = 0; b <= L; ++b) {
      double diff = result.histograms(j, b) - expected;
      stat += diff * diff / expected;
    }
    result.chi2_stat.push_back(stat);
    result.p_value.push_back(boost::math::cdf(boost::math::complement(chi2, stat)));
  }

  boost::math::binomial binom(k_eff, 1.0 / (L + 1));
  result.band_lower = static_cast<long>(boost::math::quantile(binom, 0.005));
  result.band_upper = static_cast<long>(boost::math::quantile(
      boost::math::complement(binom, 0.005)));
  return result;
}

std::pair<double, double> mode_coverage(const Matrix& samples) {
  if (samples.cols() != 2)
    throw std::invalid_argument("mode_coverage: expected 2-column samples");
  long pos = 0;
  for (long i = 0; i < samples.rows(); ++i) {
    double s = samples(i, 0) + samples(i, 1);
    if (s > 0 || (s == 0 && samples(i, 0) > 0)) ++pos;
  }
  double f = static_cast<double>(pos) / static_cast<double>(samples.rows());
  return {f, 1.0 - f};
}

}  // namespace snpla::metrics
