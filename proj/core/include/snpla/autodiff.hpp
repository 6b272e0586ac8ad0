#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace snpla::ad {

using Matrix = Eigen::MatrixXd;

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
/// Raised by the optimizer when a gradient contains NaN/Inf; carries the
/// parameter name so training loops can abort the epoch with context.
struct GradientError : std::runtime_error {
  explicit GradientError(const std::string& param, const std::string& what)
      : std::runtime_error(what), parameter(param) {}
  std::string parameter;
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// A node in the eager reverse-mode graph. The graph is built per forward
/// pass and freed when the last Var handle goes out of scope. Gradients
/// accumulate additively across fan-out; callers reset grads between steps.
struct Node {
  Matrix value;
  Matrix grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(const Matrix& upstream)> backward_rule;

  void accumulate(const Matrix& g) {
    if (!requires_grad) return;
    if (grad.size() == 0)
      grad = g;
    else
      grad += g;
  }
};

/// Value-semantics handle to a graph node.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : n_(std::move(n)) {}

  static Var leaf(Matrix value, bool requires_grad = false);
  static Var scalar(double v) { return leaf(Matrix::Constant(1, 1, v)); }

  const Matrix& value() const { return n_->value; }
  Matrix& mutable_value() { return n_->value; }
  /// Accumulated gradient; zeros if backward never reached this node.
  Matrix grad() const {
    return n_->grad.size() ? n_->grad : Matrix::Zero(n_->value.rows(), n_->value.cols());
  }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  void set_requires_grad(bool b) { n_->requires_grad = b; }
  void zero_grad() { n_->grad.resize(0, 0); }

  Eigen::Index rows() const { return n_->value.rows(); }
  Eigen::Index cols() const { return n_->value.cols(); }
  bool valid() const { return n_ != nullptr; }
  const NodePtr& node() const { return n_; }

 private:
  NodePtr n_;
};

// Operation set. Elementwise binary ops accept equal shapes, or a 1xD
// second operand broadcast across the rows of an NxD first operand.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var matmul(const Var& a, const Var& b);
/// x * (w .* mask) for a fixed binary mask; masked-out weight positions
/// receive exactly zero gradient.
Var masked_matmul(const Var& x, const Var& w, const Matrix& mask);
Var tanh(const Var& v);
Var sigmoid(const Var& v);
Var exp(const Var& v);
Var log(const Var& v);
Var square(const Var& v);
Var sum(const Var& v);     // -> 1x1
Var mean(const Var& v);    // -> 1x1
Var rowsum(const Var& v);  // NxD -> Nx1
Var colsum(const Var& v);  // NxD -> 1xD
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& v, int first, int count);
Var scale(const Var& v, double k);
Var shift(const Var& v, double c);
Var neg(const Var& v);
/// log(1 + exp(v)), evaluated overflow-free.
Var softplus(const Var& v);
/// Tile a 1xD row into an NxD matrix; gradient is the column sum.
Var repeat_rows(const Var& v, int n);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(double k, const Var& v) { return scale(v, k); }
inline Var operator-(const Var& v) { return neg(v); }

/// Reverse pass from a scalar (1x1) root. Deterministic: running it twice
/// on the same graph after a grad reset yields identical gradients.
void backward(const Var& root);

struct Parameter {
  std::string name;
  Var var;
};

/// Ordered named-parameter registry for one model. Names are unique.
class ParameterStore {
 public:
  Var add(const std::string& name, Matrix init);
  void adopt(const ParameterStore& other);  // merge (joint optimization)

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  void zero_grad();
  void set_requires_grad(bool b);

  long size() const;  // total scalar count
  Eigen::VectorXd flatten_values() const;
  void unflatten_values(const Eigen::VectorXd& v);
  Eigen::VectorXd flatten_grads() const;

 private:
  std::vector<Parameter> params_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // global-norm clip; 0 disables (the default)
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// One Adam update with bias correction over every parameter in the store.
  /// Throws GradientError (naming the parameter) on NaN/Inf gradients.
  void step(ParameterStore& store, double lr);
  void reset();
  long step_count() const { return t_; }

 private:
  struct Moments {
    Matrix m, v;
  };
  AdamConfig cfg_;
  std::unordered_map<const Node*, Moments> state_;
  long t_ = 0;
};

/// lr0 * gamma^(r-1) for round index r >= 1.
double exp_lr_decay(double lr0, double gamma, int round_index);

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  bool pass = false;
  std::string worst_param;
};

/// Central-difference gradient check. `make_loss` rebuilds the scalar loss
/// graph from the current parameter values and must be deterministic (fix
/// any noise before calling). Independent of the backward pass it verifies.
FiniteDiffReport finite_diff_check(const std::function<Var()>& make_loss,
                                   ParameterStore& params, double step, double tol);

}  // namespace snpla::ad
