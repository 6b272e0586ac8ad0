#include "snpla/flows.hpp"

#include <cmath>

namespace snpla::flow {

namespace {

constexpr double kLogScaleClamp = 7.0;
constexpr double kLog2Pi = 1.8378770664093453;

// Degree assignment for the MADE mask scheme. Inputs carry degrees 1..d,
// context carries degree 0 (never masked), hidden units cycle through
// 1..d-1 (0 when d == 1, leaving mu/s a function of the context alone).
std::vector<int> hidden_degrees(int d, int width, int layer_index) {
  std::vector<int> deg(width);
  if (d == 1) return deg;  // all zero
  for (int k = 0; k < width; ++k) deg[k] = ((k + layer_index) % (d - 1)) + 1;
  return deg;
}

Var permute_cols(const Var& v, const std::vector<int>& perm) {
  std::vector<Var> parts;
  parts.reserve(perm.size());
  for (int j : perm) parts.push_back(ad::slice_cols(v, j, 1));
  return ad::concat_cols(parts);
}

std::vector<int> inverse_perm(const std::vector<int>& perm) {
  std::vector<int> inv(perm.size());
  for (size_t j = 0; j < perm.size(); ++j) inv[perm[j]] = static_cast<int>(j);
  return inv;
}

void check_finite(const Var& v, const char* dir, size_t layer) {
  if (!v.value().allFinite())
    throw ad::DomainError(std::string(dir) + ": non-finite output at layer " +
                          std::to_string(layer));
}

}  // namespace

MadeConditioner::MadeConditioner(int dim, int context_dim, std::vector<int> hidden,
                                 ad::ParameterStore& store,
                                 const std::string& prefix, RngStream& rng)
    : d_(dim), c_(context_dim), hidden_(std::move(hidden)) {
  if (dim < 1) throw std::invalid_argument("MadeConditioner: dim must be >= 1");
  if (hidden_.empty())
    throw std::invalid_argument("MadeConditioner: need at least one hidden layer");

  std::vector<int> prev_deg(d_ + c_);
  for (int j = 0; j < d_; ++j) prev_deg[j] = j + 1;
  // context rows keep degree 0

  int in_width = d_ + c_;
  for (size_t l = 0; l < hidden_.size(); ++l) {
    int out_width = hidden_[l];
    std::vector<int> deg = hidden_degrees(d_, out_width, static_cast<int>(l));
    Matrix mask(in_width, out_width);
    for (int r = 0; r < in_width; ++r)
      for (int col = 0; col < out_width; ++col)
        mask(r, col) = (deg[col] >= prev_deg[r]) ? 1.0 : 0.0;
    double sd = 1.0 / std::sqrt(static_cast<double>(in_width));
    Matrix w = sd * rng.normal_matrix(in_width, out_width);
    weights_.push_back(store.add(prefix + ".W" + std::to_string(l), w));
    biases_.push_back(
        store.add(prefix + ".b" + std::to_string(l), Matrix::Zero(1, out_width)));
    masks_.push_back(std::move(mask));
    prev_deg = std::move(deg);
    in_width = out_width;
  }

  // Output layer: 2d columns, (mu_i, s_i) at degree i, connected iff
  // i > hidden degree. Zero-initialized so the flow starts as the identity.
  Matrix mask(in_width, 2 * d_);
  for (int r = 0; r < in_width; ++r)
    for (int col = 0; col < 2 * d_; ++col) {
      int coord = (col % d_) + 1;
      mask(r, col) = (coord > prev_deg[r]) ? 1.0 : 0.0;
    }
  weights_.push_back(store.add(prefix + ".Wout", Matrix::Zero(in_width, 2 * d_)));
  biases_.push_back(store.add(prefix + ".bout", Matrix::Zero(1, 2 * d_)));
  masks_.push_back(std::move(mask));
}

std::pair<Var, Var> MadeConditioner::shift_and_log_scale(const Var& x,
                                                         const Var& ctx) const {
  Var h = (c_ > 0) ? ad::concat_cols({x, ctx}) : x;
  size_t n_hidden = hidden_.size();
  for (size_t l = 0; l < n_hidden; ++l)
    h = ad::tanh(ad::add(ad::masked_matmul(h, weights_[l], masks_[l]), biases_[l]));
  Var out = ad::add(ad::masked_matmul(h, weights_[n_hidden], masks_[n_hidden]),
                    biases_[n_hidden]);
  Var mu = ad::slice_cols(out, 0, d_);
  Var s_raw = ad::slice_cols(out, d_, d_);
  Var s = ad::scale(ad::tanh(ad::scale(s_raw, 1.0 / kLogScaleClamp)), kLogScaleClamp);
  return {mu, s};
}

ConditionalFlow::ConditionalFlow(FlowArchitecture arch, RngStream& rng)
    : arch_(std::move(arch)) {
  if (arch_.dim < 1) throw std::invalid_argument("ConditionalFlow: dim >= 1 required");
  if (arch_.n_layers < 1)
    throw std::invalid_argument("ConditionalFlow: n_layers >= 1 required");
  if (arch_.box) {
    const auto& [a, b] = *arch_.box;
    if (a.size() != arch_.dim || b.size() != arch_.dim)
      throw std::invalid_argument("ConditionalFlow: box dimension mismatch");
    for (int j = 0; j < arch_.dim; ++j)
      if (a(j) >= b(j))
        throw std::invalid_argument("ConditionalFlow: box lower >= upper at " +
                                    std::to_string(j));
  }

  std::vector<int> reversal(arch_.dim);
  for (int j = 0; j < arch_.dim; ++j) reversal[j] = arch_.dim - 1 - j;

  for (int l = 0; l < arch_.n_layers; ++l) {
    layers_.push_back(AffineLayer{MadeConditioner(
        arch_.dim, arch_.context_dim, arch_.hidden, params_,
        "aa" + std::to_string(l), rng)});
    if (l + 1 < arch_.n_layers) layers_.push_back(PermuteLayer{reversal});
  }
  if (arch_.box) layers_.push_back(SigmoidBoxLayer{arch_.box->first, arch_.box->second});
}

Var ConditionalFlow::prepare_context(const Var& ctx, Eigen::Index n) const {
  if (arch_.context_dim == 0) return Var::leaf(Matrix(n, 0));
  if (!ctx.valid())
    throw ad::ShapeError("flow: context required (context_dim > 0)");
  if (ctx.cols() != arch_.context_dim)
    throw ad::ShapeError("flow: context dim " + std::to_string(ctx.cols()) +
                         " != " + std::to_string(arch_.context_dim));
  if (ctx.rows() == n) return ctx;
  if (ctx.rows() == 1) return ad::repeat_rows(ctx, static_cast<int>(n));
  throw ad::ShapeError("flow: context batch mismatch");
}

ConditionalFlow::Pass ConditionalFlow::forward(const Var& u, const Var& ctx) const {
  Eigen::Index n = u.rows();
  if (u.cols() != arch_.dim) throw ad::ShapeError("flow_forward: input dim mismatch");
  Var ctx_n = prepare_context(ctx, n);

  Var cur = u;
  Var logdet;
  auto add_term = [&](const Var& t) {
    logdet = logdet.valid() ? ad::add(logdet, t) : t;
  };

  for (size_t li = 0; li < layers_.size(); ++li) {
    const FlowLayer& layer = layers_[li];
    if (const auto* aa = std::get_if<AffineLayer>(&layer)) {
      int d = arch_.dim;
      std::vector<Var> cols, scols;
      for (int i = 0; i < d; ++i) {
        Var xin;
        if (i == 0) {
          xin = Var::leaf(Matrix::Zero(n, d));
        } else {
          std::vector<Var> parts(cols.begin(), cols.end());
          parts.push_back(Var::leaf(Matrix::Zero(n, d - i)));
          xin = ad::concat_cols(parts);
        }
        auto [mu, s] = aa->conditioner.shift_and_log_scale(xin, ctx_n);
        Var mu_i = ad::slice_cols(mu, i, 1);
        Var s_i = ad::slice_cols(s, i, 1);
        Var u_i = ad::slice_cols(cur, i, 1);
        cols.push_back(ad::add(ad::mul(u_i, ad::exp(s_i)), mu_i));
        scols.push_back(s_i);
      }
      cur = ad::concat_cols(cols);
      add_term(ad::rowsum(ad::concat_cols(scols)));
    } else if (const auto* perm = std::get_if<PermuteLayer>(&layer)) {
      cur = permute_cols(cur, perm->perm);
    } else {
      const auto& box = std::get<SigmoidBoxLayer>(layer);
      Var sig = ad::sigmoid(cur);
      Var range = Var::leaf(Matrix((box.upper - box.lower).transpose()));
      Var low = Var::leaf(Matrix(box.lower.transpose()));
      // log sigma(z) = -softplus(-z), log(1 - sigma(z)) = -softplus(z)
      Var ld = ad::neg(ad::rowsum(ad::add(ad::softplus(cur), ad::softplus(ad::neg(cur)))));
      double const_term = (box.upper - box.lower).array().log().sum();
      add_term(ad::shift(ld, const_term));
      cur = ad::add(ad::mul(sig, range), low);
    }
    check_finite(cur, "flow_forward", li);
  }
  if (!logdet.valid()) logdet = Var::leaf(Matrix::Zero(n, 1));
  return {cur, logdet};
}

ConditionalFlow::Pass ConditionalFlow::inverse(const Var& x, const Var& ctx) const {
  Eigen::Index n = x.rows();
  if (x.cols() != arch_.dim) throw ad::ShapeError("flow_inverse: input dim mismatch");
  Var ctx_n = prepare_context(ctx, n);

  Var cur = x;
  Var logdet;
  auto add_term = [&](const Var& t) {
    logdet = logdet.valid() ? ad::add(logdet, t) : t;
  };

  for (size_t idx = layers_.size(); idx-- > 0;) {
    const FlowLayer& layer = layers_[idx];
    if (const auto* aa = std::get_if<AffineLayer>(&layer)) {
      auto [mu, s] = aa->conditioner.shift_and_log_scale(cur, ctx_n);
      cur = ad::mul(ad::sub(cur, mu), ad::exp(ad::neg(s)));
      add_term(ad::neg(ad::rowsum(s)));
    } else if (const auto* perm = std::get_if<PermuteLayer>(&layer)) {
      cur = permute_cols(cur, inverse_perm(perm->perm));
    } else {
      const auto& box = std::get<SigmoidBoxLayer>(layer);
      const Matrix& v = cur.value();
      for (Eigen::Index r = 0; r < v.rows(); ++r)
        for (int j = 0; j < arch_.dim; ++j)
          if (v(r, j) <= box.lower(j) || v(r, j) >= box.upper(j))
            throw ad::DomainError("flow_inverse: point on/outside box boundary");
      Var range_inv =
          Var::leaf(Matrix((box.upper - box.lower).cwiseInverse().transpose()));
      Var low = Var::leaf(Matrix(box.lower.transpose()));
      Var w = ad::mul(ad::sub(cur, low), range_inv);
      Var one_minus_w = ad::shift(ad::neg(w), 1.0);
      cur = ad::sub(ad::log(w), ad::log(one_minus_w));
      double const_term = -(box.upper - box.lower).array().log().sum();
      add_term(ad::shift(
          ad::neg(ad::add(ad::rowsum(ad::log(w)), ad::rowsum(ad::log(one_minus_w)))),
          const_term));
    }
    check_finite(cur, "flow_inverse", idx);
  }
  if (!logdet.valid()) logdet = Var::leaf(Matrix::Zero(n, 1));
  return {cur, logdet};
}

Var ConditionalFlow::log_prob(const Var& x, const Var& ctx) const {
  Pass inv = inverse(x, ctx);
  Var base = ad::shift(ad::scale(ad::rowsum(ad::square(inv.x)), -0.5),
                       -0.5 * arch_.dim * kLog2Pi);
  return ad::add(base, inv.logdet);
}

ConditionalFlow::SampleResult ConditionalFlow::sample(int n, const Var& ctx,
                                                      RngStream& rng) const {
  if (n < 1) throw std::invalid_argument("flow sample: n >= 1 required");
  return sample_from_noise(rng.normal_matrix(n, arch_.dim), ctx);
}

ConditionalFlow::SampleResult ConditionalFlow::sample_from_noise(
    const Matrix& noise, const Var& ctx) const {
  Var u = Var::leaf(noise);
  Pass fwd = forward(u, ctx);
  double d = static_cast<double>(arch_.dim);
  Matrix base = (-0.5 * noise.array().square().rowwise().sum() - 0.5 * d * kLog2Pi);
  Var log_probs = ad::sub(Var::leaf(base), fwd.logdet);
  return {fwd.x, log_probs, noise};
}

nlohmann::json ConditionalFlow::to_json() const {
  nlohmann::json j;
  j["dim"] = arch_.dim;
  j["context_dim"] = arch_.context_dim;
  j["n_layers"] = arch_.n_layers;
  j["hidden"] = arch_.hidden;
  if (arch_.box) {
    j["box"] = {{"lower", std::vector<double>(arch_.box->first.begin(),
                                              arch_.box->first.end())},
                {"upper", std::vector<double>(arch_.box->second.begin(),
                                              arch_.box->second.end())}};
  } else {
    j["box"] = nullptr;
  }
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : params_.params()) {
    const Matrix& m = p.var.value();
    params.push_back({{"name", p.name},
                      {"rows", m.rows()},
                      {"cols", m.cols()},
                      {"data", std::vector<double>(m.data(), m.data() + m.size())}});
  }
  j["params"] = params;
  return j;
}

ConditionalFlow ConditionalFlow::from_json(const nlohmann::json& j) {
  FlowArchitecture arch;
  arch.dim = j.at("dim").get<int>();
  arch.context_dim = j.at("context_dim").get<int>();
  arch.n_layers = j.at("n_layers").get<int>();
  arch.hidden = j.at("hidden").get<std::vector<int>>();
  if (!j.at("box").is_null()) {
    auto lo = j["box"].at("lower").get<std::vector<double>>();
    auto hi = j["box"].at("upper").get<std::vector<double>>();
    arch.box = {Eigen::Map<Eigen::VectorXd>(lo.data(), lo.size()),
                Eigen::Map<Eigen::VectorXd>(hi.data(), hi.size())};
  }
  RngStream scratch(0);
  ConditionalFlow flow(arch, scratch);
  for (const auto& entry : j.at("params")) {
    std::string name = entry.at("name").get<std::string>();
    bool found = false;
    for (auto& p : flow.params_.params()) {
      if (p.name != name) continue;
      auto data = entry.at("data").get<std::vector<double>>();
      Matrix m = Eigen::Map<Matrix>(data.data(), entry.at("rows").get<long>(),
                                    entry.at("cols").get<long>());
      if (m.rows() != p.var.rows() || m.cols() != p.var.cols())
        throw std::invalid_argument("checkpoint: shape mismatch for " + name);
      p.var.mutable_value() = m;
      found = true;
      break;
    }
    if (!found) throw std::invalid_argument("checkpoint: unknown parameter " + name);
  }
  return flow;
}

Var forward_kl_loss(const ConditionalFlow& flow, const Matrix& targets,
                    const Matrix& contexts) {
  if (targets.rows() == 0)
    throw std::invalid_argument("forward_kl_loss: empty batch");
  if (flow.context_dim() > 0 && contexts.rows() != targets.rows())
    throw ad::ShapeError("forward_kl_loss: targets/contexts misaligned");
  Var x = Var::leaf(targets);
  Var ctx = Var::leaf(contexts);
  return ad::neg(ad::mean(flow.log_prob(x, ctx)));
}

Var reverse_kl_loss(const ConditionalFlow& posterior_flow,
                    const ConditionalFlow& likelihood_flow,
                    const std::function<Var(const Var& theta)>& prior_log_prob,
                    const Var& posterior_ctx, const Matrix& x_obs, int n_mini,
                    RngStream& rng, const Matrix* fixed_noise) {
  if (n_mini < 1) throw std::invalid_argument("reverse_kl_loss: n_mini >= 1");
  ConditionalFlow::SampleResult s =
      fixed_noise ? posterior_flow.sample_from_noise(*fixed_noise, posterior_ctx)
                  : posterior_flow.sample(n_mini, posterior_ctx, rng);
  int n = static_cast<int>(s.samples.rows());
  Var x_rep = Var::leaf(x_obs.replicate(n, 1));
  Var log_like = likelihood_flow.log_prob(x_rep, s.samples);
  Var term = ad::sub(s.log_probs, log_like);
  if (prior_log_prob) term = ad::sub(term, prior_log_prob(s.samples));
  return ad::mean(term);
}

}  // namespace snpla::flow
