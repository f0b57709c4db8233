#pragma once

#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "strokediff/tensor.hpp"

// Minimal reverse-mode automatic differentiation over dense matrices.
// A Tape records one forward computation; backward() walks it in reverse
// and accumulates gradients into the Parameters that were read.
namespace strokediff::ad {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool frozen = false;  // excluded from gradients and optimizer updates
};

// Named, insertion-ordered parameter collection with stable addresses.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Matrix init);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::deque<Parameter>& items() { return params_; }
  const std::deque<Parameter>& items() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();

 private:
  std::deque<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Tape;

// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

class Tape {
 public:
  // With record = false no backward closures are kept (inference mode).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var param(Parameter& p);

  // Seeds d(scalar)/d(scalar) = 1 and propagates to every parameter.
  void backward(Var scalar);

  bool recording() const { return record_; }

  // Node plumbing for op implementations.
  using Backward = std::function<void(Tape&, int self)>;
  Var push(Matrix value, bool needs_grad, Backward back);
  const Matrix& value(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  const Matrix& grad(int id) const { return nodes_[id].grad; }
  // Adds `delta` to the gradient of node `id` when it requires one.
  void accumulate(int id, const Matrix& delta);
  template <typename Expr>
  void accumulate_expr(int id, const Expr& delta) {
    if (!nodes_[id].needs_grad) return;
    auto& g = nodes_[id].grad;
    if (g.size() == 0) {
      g = delta;
    } else {
      g += delta;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Parameter* param = nullptr;
    Backward back;
  };
  std::vector<Node> nodes_;
  bool record_;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double s);
Var add_row(Var a, Var row);  // broadcast a (1, C) row over every row of a
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var transpose(Var a);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var softmax_rows(Var a);
Var max_rows(Var a);  // (N, C) -> (1, C); gradient routed to the first maximum

// Fused GRU cell (gate order r, u, n):
//   r = sigmoid(gx_r + gh_r), u = sigmoid(gx_u + gh_u),
//   n = tanh(gx_n + r * gh_n),  h' = (1 - u) * n + u * h
// where gh = h * w_h + b_h. Rows with step_mask == 0 carry h through
// unchanged (padding positions).
Var gru_cell(Var gx, Var h, Var w_h, Var b_h, const Matrix& step_mask);

// sum_t sum_rows row_weight[t](r) * || pred[t](r) - target[t](r) ||^2.
// Rows with zero weight are skipped entirely.
Var weighted_sse(const std::vector<Var>& pred, const std::vector<Matrix>& target,
                 const std::vector<Matrix>& row_weight);

// Mean softmax cross-entropy of logits (N, K) against integer labels.
Var cross_entropy(Var logits, const std::vector<int>& labels);

}  // namespace strokediff::ad
