#include "snpla/autodiff.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace snpla::ad {

namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << "(" << m.rows() << "x" << m.cols() << ")";
  return os.str();
}

enum class BinMode { Same, RowBcast };

BinMode check_binary(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return BinMode::Same;
  if (b.rows() == 1 && b.cols() == a.cols()) return BinMode::RowBcast;
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                   shape_str(b));
}

NodePtr make_node(Matrix value, std::vector<NodePtr> parents) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  return n;
}

}  // namespace

Var Var::leaf(Matrix value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(n);
}

Var add(const Var& a, const Var& b) {
  BinMode mode = check_binary("add", a.value(), b.value());
  Matrix out = (mode == BinMode::Same)
                   ? Matrix(a.value() + b.value())
                   : Matrix(a.value().rowwise() + b.value().row(0));
  auto n = make_node(std::move(out), {a.node(), b.node()});
  NodePtr pa = a.node(), pb = b.node();
  n->backward_rule = [pa, pb, mode](const Matrix& g) {
    pa->accumulate(g);
    if (pb->requires_grad)
      pb->accumulate(mode == BinMode::Same ? g : Matrix(g.colwise().sum()));
  };
  return Var(n);
}

Var sub(const Var& a, const Var& b) {
  BinMode mode = check_binary("sub", a.value(), b.value());
  Matrix out = (mode == BinMode::Same)
                   ? Matrix(a.value() - b.value())
                   : Matrix(a.value().rowwise() - b.value().row(0));
  auto n = make_node(std::move(out), {a.node(), b.node()});
  NodePtr pa = a.node(), pb = b.node();
  n->backward_rule = [pa, pb, mode](const Matrix& g) {
    pa->accumulate(g);
    if (pb->requires_grad)
      pb->accumulate(mode == BinMode::Same ? Matrix(-g) : Matrix(-g.colwise().sum()));
  };
  return Var(n);
}

Var mul(const Var& a, const Var& b) {
  BinMode mode = check_binary("mul", a.value(), b.value());
  Matrix out;
  if (mode == BinMode::Same)
    out = a.value().cwiseProduct(b.value());
  else
    out = a.value().array().rowwise() * b.value().row(0).array();
  auto n = make_node(std::move(out), {a.node(), b.node()});
  NodePtr pa = a.node(), pb = b.node();
  n->backward_rule = [pa, pb, mode](const Matrix& g) {
    if (mode == BinMode::Same) {
      if (pa->requires_grad) pa->accumulate(g.cwiseProduct(pb->value));
      if (pb->requires_grad) pb->accumulate(g.cwiseProduct(pa->value));
    } else {
      if (pa->requires_grad)
        pa->accumulate(g.array().rowwise() * pb->value.row(0).array());
      if (pb->requires_grad)
        pb->accumulate(g.cwiseProduct(pa->value).colwise().sum());
    }
  };
  return Var(n);
}

Var div(const Var& a, const Var& b) {
  BinMode mode = check_binary("div", a.value(), b.value());
  if ((b.value().array() == 0.0).any())
    throw DomainError("div: zero divisor");
  Matrix out;
  if (mode == BinMode::Same)
    out = a.value().cwiseQuotient(b.value());
  else
    out = a.value().array().rowwise() / b.value().row(0).array();
  auto n = make_node(std::move(out), {a.node(), b.node()});
  NodePtr pa = a.node(), pb = b.node();
  Matrix val = n->value;
  n->backward_rule = [pa, pb, mode, val](const Matrix& g) {
    if (mode == BinMode::Same) {
      if (pa->requires_grad) pa->accumulate(g.cwiseQuotient(pb->value));
      if (pb->requires_grad)
        pb->accumulate(-g.cwiseProduct(val).cwiseQuotient(pb->value));
    } else {
      if (pa->requires_grad)
        pa->accumulate(g.array().rowwise() / pb->value.row(0).array());
      if (pb->requires_grad) {
        Matrix t = -g.cwiseProduct(val);
        pb->accumulate(Matrix(t.colwise().sum()).array().rowwise() /
                       pb->value.row(0).array());
      }
    }
  };
  return Var(n);
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: shape mismatch " + shape_str(a.value()) + " vs " +
                     shape_str(b.value()));
  auto n = make_node(a.value() * b.value(), {a.node(), b.node()});
  NodePtr pa = a.node(), pb = b.node();
  n->backward_rule = [pa, pb](const Matrix& g) {
    if (pa->requires_grad) pa->accumulate(g * pb->value.transpose());
    if (pb->requires_grad) pb->accumulate(pa->value.transpose() * g);
  };
  return Var(n);
}

Var masked_matmul(const Var& x, const Var& w, const Matrix& mask) {
  if (x.cols() != w.rows())
    throw ShapeError("masked_matmul: shape mismatch " + shape_str(x.value()) +
                     " vs " + shape_str(w.value()));
  if (mask.rows() != w.rows() || mask.cols() != w.cols())
    throw ShapeError("masked_matmul: mask shape " + shape_str(mask) +
                     " vs weight " + shape_str(w.value()));
  Matrix wm = w.value().cwiseProduct(mask);
  auto n = make_node(x.value() * wm, {x.node(), w.node()});
  NodePtr px = x.node(), pw = w.node();
  n->backward_rule = [px, pw, mask, wm](const Matrix& g) {
    if (px->requires_grad) px->accumulate(g * wm.transpose());
    if (pw->requires_grad)
      pw->accumulate((px->value.transpose() * g).cwiseProduct(mask));
  };
  return Var(n);
}

Var tanh(const Var& v) {
  auto n = make_node(v.value().array().tanh(), {v.node()});
  NodePtr p = v.node();
  Matrix val = n->value;
  n->backward_rule = [p, val](const Matrix& g) {
    p->accumulate(g.array() * (1.0 - val.array().square()));
  };
  return Var(n);
}

Var sigmoid(const Var& v) {
  auto n = make_node((1.0 / (1.0 + (-v.value().array()).exp())), {v.node()});
  NodePtr p = v.node();
  Matrix val = n->value;
  n->backward_rule = [p, val](const Matrix& g) {
    p->accumulate(g.array() * val.array() * (1.0 - val.array()));
  };
  return Var(n);
}

Var exp(const Var& v) {
  auto n = make_node(v.value().array().exp(), {v.node()});
  NodePtr p = v.node();
  Matrix val = n->value;
  n->backward_rule = [p, val](const Matrix& g) { p->accumulate(g.cwiseProduct(val)); };
  return Var(n);
}

Var log(const Var& v) {
  if ((v.value().array() <= 0.0).any())
    throw DomainError("log: non-positive operand");
  auto n = make_node(v.value().array().log(), {v.node()});
  NodePtr p = v.node();
  n->backward_rule = [p](const Matrix& g) { p->accumulate(g.cwiseQuotient(p->value)); };
  return Var(n);
}

Var square(const Var& v) {
  auto n = make_node(v.value().array().square(), {v.node()});
  NodePtr p = v.node();
  n->backward_rule = [p](const Matrix& g) {
    p->accumulate(2.0 * g.cwiseProduct(p->value));
  };
  return Var(n);
}

Var sum(const Var& v) {
  auto n = make_node(Matrix::Constant(1, 1, v.value().sum()), {v.node()});
  NodePtr p = v.node();
  n->backward_rule = [p](const Matrix& g) {
    p->accumulate(Matrix::Constant(p->value.rows(), p->value.cols(), g(0, 0)));
  };
  return Var(n);
}

Var mean(const Var& v) {
  double inv = 1.0 / static_cast<double>(v.value().size());
  auto n = make_node(Matrix::Constant(1, 1, v.value().sum() * inv), {v.node()});
  NodePtr p = v.node();
  n->backward_rule = [p, inv](const Matrix& g) {
    p->accumulate(Matrix::Constant(p->value.rows(), p->value.cols(), g(0, 0) * inv));
  };
  return Var(n);
}

Var rowsum(const Var& v) {
  auto n = make_node(Matrix(v.value().rowwise().sum()), {v.node()});
  NodePtr p = v.node();
  n->backward_rule = [p](const Matrix& g) {
    p->accumulate(g.col(0).replicate(1, p->value.cols()));
  };
  return Var(n);
}

Var colsum(const Var& v) {
  auto n = make_node(Matrix(v.value().colwise().sum()), {v.node()});
  NodePtr p = v.node();
  n->backward_rule = [p](const Matrix& g) {
    p->accumulate(g.row(0).replicate(p->value.rows(), 1));
  };
  return Var(n);
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: empty input");
  Eigen::Index rows = parts[0].rows(), cols = 0;
  for (const auto& part : parts) {
    if (part.rows() != rows)
      throw ShapeError("concat_cols: row mismatch " + shape_str(part.value()));
    cols += part.cols();
  }
  Matrix out(rows, cols);
  std::vector<NodePtr> parents;
  Eigen::Index at = 0;
  for (const auto& part : parts) {
    out.middleCols(at, part.cols()) = part.value();
    parents.push_back(part.node());
    at += part.cols();
  }
  auto n = make_node(std::move(out), std::move(parents));
  std::vector<NodePtr> ps = n->parents;
  n->backward_rule = [ps](const Matrix& g) {
    Eigen::Index at = 0;
    for (const auto& p : ps) {
      if (p->requires_grad) p->accumulate(g.middleCols(at, p->value.cols()));
      at += p->value.cols();
    }
  };
  return Var(n);
}

Var slice_cols(const Var& v, int first, int count) {
  if (first < 0 || count < 0 || first + count > v.cols())
    throw ShapeError("slice_cols: range [" + std::to_string(first) + "," +
                     std::to_string(first + count) + ") out of " +
                     shape_str(v.value()));
  auto n = make_node(v.value().middleCols(first, count), {v.node()});
  NodePtr p = v.node();
  n->backward_rule = [p, first, count](const Matrix& g) {
    Matrix full = Matrix::Zero(p->value.rows(), p->value.cols());
    full.middleCols(first, count) = g;
    p->accumulate(full);
  };
  return Var(n);
}

Var scale(const Var& v, double k) {
  auto n = make_node(k * v.value(), {v.node()});
  NodePtr p = v.node();
  n->backward_rule = [p, k](const Matrix& g) { p->accumulate(k * g); };
  return Var(n);
}

Var shift(const Var& v, double c) {
  auto n = make_node(v.value().array() + c, {v.node()});
  NodePtr p = v.node();
  n->backward_rule = [p](const Matrix& g) { p->accumulate(g); };
  return Var(n);
}

Var neg(const Var& v) { return scale(v, -1.0); }

Var softplus(const Var& v) {
  Matrix out = v.value().array().max(0.0) +
               (-v.value().array().abs()).exp().log1p();
  auto n = make_node(std::move(out), {v.node()});
  NodePtr p = v.node();
  n->backward_rule = [p](const Matrix& g) {
    p->accumulate(g.array() * (1.0 / (1.0 + (-p->value.array()).exp())));
  };
  return Var(n);
}

Var repeat_rows(const Var& v, int n) {
  if (v.rows() != 1) throw ShapeError("repeat_rows: input must be 1 row");
  auto node = make_node(v.value().replicate(n, 1), {v.node()});
  NodePtr p = v.node();
  node->backward_rule = [p](const Matrix& g) {
    p->accumulate(g.colwise().sum());
  };
  return Var(node);
}

void backward(const Var& root) {
  if (root.rows() != 1 || root.cols() != 1)
    throw ShapeError("backward: root must be scalar, got " + shape_str(root.value()));
  if (!root.requires_grad()) return;

  // Iterative post-order DFS; children appear after all their parents in
  // `order`, so the reversed order is a valid reverse-topological sweep.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack{{root.node().get(), 0}};
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* parent = node->parents[idx++].get();
      if (parent->requires_grad && visited.insert(parent).second)
        stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior grads are scratch space owned by this pass; leaves keep
  // accumulating until the caller resets them.
  for (Node* node : order)
    if (node->backward_rule) node->grad.resize(0, 0);

  root.node()->accumulate(Matrix::Constant(1, 1, 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_rule && node->grad.size()) node->backward_rule(node->grad);
  }
}

Var ParameterStore::add(const std::string& name, Matrix init) {
  for (const auto& p : params_)
    if (p.name == name) throw std::invalid_argument("duplicate parameter: " + name);
  Var v = Var::leaf(std::move(init), true);
  params_.push_back({name, v});
  return v;
}

void ParameterStore::adopt(const ParameterStore& other) {
  for (const auto& p : other.params_) {
    for (const auto& q : params_)
      if (q.name == p.name) throw std::invalid_argument("duplicate parameter: " + p.name);
    params_.push_back(p);
  }
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

void ParameterStore::set_requires_grad(bool b) {
  for (auto& p : params_) p.var.set_requires_grad(b);
}

long ParameterStore::size() const {
  long n = 0;
  for (const auto& p : params_) n += static_cast<long>(p.var.value().size());
  return n;
}

Eigen::VectorXd ParameterStore::flatten_values() const {
  Eigen::VectorXd out(size());
  long at = 0;
  for (const auto& p : params_) {
    const Matrix& m = p.var.value();
    out.segment(at, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    at += m.size();
  }
  return out;
}

void ParameterStore::unflatten_values(const Eigen::VectorXd& v) {
  if (v.size() != size()) throw ShapeError("unflatten_values: size mismatch");
  long at = 0;
  for (auto& p : params_) {
    Matrix& m = p.var.mutable_value();
    Eigen::Map<Eigen::VectorXd>(m.data(), m.size()) = v.segment(at, m.size());
    at += m.size();
  }
}

Eigen::VectorXd ParameterStore::flatten_grads() const {
  Eigen::VectorXd out(size());
  long at = 0;
  for (const auto& p : params_) {
    Matrix g = p.var.grad();
    out.segment(at, g.size()) = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
    at += g.size();
  }
  return out;
}

void Adam::step(ParameterStore& store, double lr) {
  if (lr < 0) throw std::invalid_argument("Adam: negative learning rate");
  std::vector<Matrix> grads;
  grads.reserve(store.params().size());
  double sq_norm = 0;
  for (const auto& p : store.params()) {
    Matrix g = p.var.grad();
    if (!g.allFinite())
      throw GradientError(p.name, "non-finite gradient in parameter " + p.name);
    sq_norm += g.squaredNorm();
    grads.push_back(std::move(g));
  }
  double clip = 1.0;
  if (cfg_.clip_norm > 0 && sq_norm > cfg_.clip_norm * cfg_.clip_norm)
    clip = cfg_.clip_norm / std::sqrt(sq_norm);

  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (size_t i = 0; i < store.params().size(); ++i) {
    auto& p = store.params()[i];
    Matrix g = clip * grads[i];
    auto& mom = state_[p.var.node().get()];
    if (mom.m.size() == 0) {
      mom.m = Matrix::Zero(g.rows(), g.cols());
      mom.v = Matrix::Zero(g.rows(), g.cols());
    }
    mom.m = cfg_.beta1 * mom.m + (1.0 - cfg_.beta1) * g;
    mom.v = cfg_.beta2 * mom.v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    Matrix mhat = mom.m / bc1;
    Matrix vhat = mom.v / bc2;
    p.var.mutable_value() -=
        (lr * mhat.array() / (vhat.array().sqrt() + cfg_.eps)).matrix();
  }
}

void Adam::reset() {
  state_.clear();
  t_ = 0;
}

double exp_lr_decay(double lr0, double gamma, int round_index) {
  if (gamma <= 0 || gamma > 1)
    throw std::invalid_argument("exp_lr_decay: gamma must be in (0,1]");
  if (round_index < 1) throw std::invalid_argument("exp_lr_decay: round index < 1");
  return lr0 * std::pow(gamma, round_index - 1);
}

FiniteDiffReport finite_diff_check(const std::function<Var()>& make_loss,
                                   ParameterStore& params, double step, double tol) {
  params.zero_grad();
  Var loss = make_loss();
  backward(loss);
  Eigen::VectorXd g_ad = params.flatten_grads();

  Eigen::VectorXd values = params.flatten_values();
  FiniteDiffReport report;
  long at = 0;
  for (const auto& p : params.params()) {
    for (long k = 0; k < p.var.value().size(); ++k, ++at) {
      Eigen::VectorXd v = values;
      v(at) += step;
      params.unflatten_values(v);
      double up = make_loss().value()(0, 0);
      v(at) -= 2 * step;
      params.unflatten_values(v);
      double down = make_loss().value()(0, 0);
      double fd = (up - down) / (2 * step);
      double denom = std::max(std::abs(fd), std::abs(g_ad(at)));
      double err = std::abs(fd - g_ad(at));
      if (denom > 1e-6) err /= denom;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = p.name;
      }
    }
  }
  params.unflatten_values(values);
  report.pass = report.max_rel_error < tol;
  return report;
}

}  // namespace snpla::ad
