#include "strokediff/autodiff.hpp"

#include <cmath>
#include <limits>

#include "strokediff/errors.hpp"

namespace strokediff::ad {

Parameter& ParameterStore::add(const std::string& name, Matrix init) {
  if (contains(name)) throw ContractError("duplicate parameter " + name);
  index_[name] = params_.size();
  Parameter p;
  p.name = name;
  p.grad = Matrix::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  params_.push_back(std::move(p));
  return params_.back();
}

Parameter& ParameterStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter " + name);
  return params_[it->second];
}

const Parameter& ParameterStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter " + name);
  return params_[it->second];
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

const Matrix& Var::value() const { return tape->value(id); }

Var Tape::push(Matrix value, bool needs_grad, Backward back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = record_ && needs_grad;
  if (n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::param(Parameter& p) {
  Node n;
  n.value = p.value;
  n.needs_grad = record_ && !p.frozen;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(int id, const Matrix& delta) { accumulate_expr(id, delta); }

void Tape::backward(Var scalar) {
  if (!record_) throw StateError("backward() on a non-recording tape");
  if (scalar.tape != this) throw ContractError("variable belongs to another tape");
  if (scalar.value().size() != 1) throw ContractError("backward() needs a scalar");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[scalar.id].needs_grad) return;
  nodes_[scalar.id].grad = Matrix::Ones(1, 1);
  for (int id = scalar.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) continue;
    if (n.param != nullptr) {
      n.param->grad += n.grad;
    } else if (n.back) {
      n.back(*this, id);
    }
  }
}

namespace {

bool any_grad(std::initializer_list<Var> vars) {
  for (const auto& v : vars) {
    if (v.tape->needs_grad(v.id)) return true;
  }
  return false;
}

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw ContractError("variable has no tape");
  return *a.tape;
}

void check_shape(bool ok, const char* what) {
  if (!ok) throw ContractError(std::string("autodiff shape mismatch in ") + what);
}

}  // namespace

Var matmul(Var a, Var b) {
  check_shape(a.cols() == b.rows(), "matmul");
  Tape& t = tape_of(a);
  Matrix out = a.value() * b.value();
  return t.push(std::move(out), any_grad({a, b}), [a, b](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    if (tp.needs_grad(a.id)) tp.accumulate_expr(a.id, g * tp.value(b.id).transpose());
    if (tp.needs_grad(b.id)) tp.accumulate_expr(b.id, tp.value(a.id).transpose() * g);
  });
}

Var add(Var a, Var b) {
  check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add");
  Tape& t = tape_of(a);
  Matrix out = a.value() + b.value();
  return t.push(std::move(out), any_grad({a, b}), [a, b](Tape& tp, int self) {
    tp.accumulate(a.id, tp.grad(self));
    tp.accumulate(b.id, tp.grad(self));
  });
}

Var sub(Var a, Var b) {
  check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub");
  Tape& t = tape_of(a);
  Matrix out = a.value() - b.value();
  return t.push(std::move(out), any_grad({a, b}), [a, b](Tape& tp, int self) {
    tp.accumulate(a.id, tp.grad(self));
    if (tp.needs_grad(b.id)) tp.accumulate_expr(b.id, -tp.grad(self));
  });
}

Var mul(Var a, Var b) {
  check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mul");
  Tape& t = tape_of(a);
  Matrix out = a.value().cwiseProduct(b.value());
  return t.push(std::move(out), any_grad({a, b}), [a, b](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    if (tp.needs_grad(a.id)) tp.accumulate_expr(a.id, g.cwiseProduct(tp.value(b.id)));
    if (tp.needs_grad(b.id)) tp.accumulate_expr(b.id, g.cwiseProduct(tp.value(a.id)));
  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  Matrix out = a.value() * s;
  return t.push(std::move(out), any_grad({a}),
                [a, s](Tape& tp, int self) { tp.accumulate_expr(a.id, tp.grad(self) * s); });
}

Var add_row(Var a, Var row) {
  check_shape(row.rows() == 1 && row.cols() == a.cols(), "add_row");
  Tape& t = tape_of(a);
  Matrix out = a.value().rowwise() + row.value().row(0);
  return t.push(std::move(out), any_grad({a, row}), [a, row](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    tp.accumulate(a.id, g);
    if (tp.needs_grad(row.id)) tp.accumulate_expr(row.id, g.colwise().sum());
  });
}

Var sigmoid(Var a) {
  Tape& t = tape_of(a);
  Matrix out = (1.0 + (-a.value().array()).exp()).inverse().matrix();
  Matrix saved = out;
  return t.push(std::move(out), any_grad({a}), [a, saved = std::move(saved)](Tape& tp, int self) {
    tp.accumulate_expr(a.id, (tp.grad(self).array() * saved.array() * (1.0 - saved.array())).matrix());
  });
}

Var tanh(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().array().tanh().matrix();
  Matrix saved = out;
  return t.push(std::move(out), any_grad({a}), [a, saved = std::move(saved)](Tape& tp, int self) {
    tp.accumulate_expr(a.id, (tp.grad(self).array() * (1.0 - saved.array().square())).matrix());
  });
}

Var relu(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().cwiseMax(0.0);
  return t.push(std::move(out), any_grad({a}), [a](Tape& tp, int self) {
    const Matrix& x = tp.value(a.id);
    tp.accumulate_expr(a.id, (x.array() > 0.0).select(tp.grad(self), 0.0).matrix());
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().transpose();
  return t.push(std::move(out), any_grad({a}),
                [a](Tape& tp, int self) { tp.accumulate_expr(a.id, tp.grad(self).transpose()); });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols of nothing");
  Tape& t = tape_of(parts[0]);
  Eigen::Index cols = 0;
  bool grad = false;
  for (const auto& p : parts) {
    check_shape(p.rows() == parts[0].rows(), "concat_cols");
    cols += p.cols();
    grad = grad || t.needs_grad(p.id);
  }
  Matrix out(parts[0].rows(), cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return t.push(std::move(out), grad, [parts](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    Eigen::Index col = 0;
    for (const auto& p : parts) {
      const Eigen::Index w = tp.value(p.id).cols();
      if (tp.needs_grad(p.id)) tp.accumulate_expr(p.id, g.middleCols(col, w));
      col += w;
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_rows of nothing");
  Tape& t = tape_of(parts[0]);
  Eigen::Index rows = 0;
  bool grad = false;
  for (const auto& p : parts) {
    check_shape(p.cols() == parts[0].cols(), "concat_rows");
    rows += p.rows();
    grad = grad || t.needs_grad(p.id);
  }
  Matrix out(rows, parts[0].cols());
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return t.push(std::move(out), grad, [parts](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    Eigen::Index row = 0;
    for (const auto& p : parts) {
      const Eigen::Index h = tp.value(p.id).rows();
      if (tp.needs_grad(p.id)) tp.accumulate_expr(p.id, g.middleRows(row, h));
      row += h;
    }
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  check_shape(start >= 0 && start + count <= a.cols(), "slice_cols");
  Tape& t = tape_of(a);
  Matrix out = a.value().middleCols(start, count);
  return t.push(std::move(out), any_grad({a}), [a, start, count](Tape& tp, int self) {
    Matrix full = Matrix::Zero(tp.value(a.id).rows(), tp.value(a.id).cols());
    full.middleCols(start, count) = tp.grad(self);
    tp.accumulate(a.id, full);
  });
}

Var softmax_rows(Var a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    out.row(i) = (x.row(i).array() - m).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  Matrix saved = out;
  return t.push(std::move(out), any_grad({a}), [a, saved = std::move(saved)](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    const Eigen::VectorXd dots = g.cwiseProduct(saved).rowwise().sum();
    Matrix dx = saved.cwiseProduct(g.colwise() - dots);
    tp.accumulate(a.id, dx);
  });
}

Var max_rows(Var a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  check_shape(x.rows() > 0, "max_rows");
  Matrix out(1, x.cols());
  std::vector<Eigen::Index> arg(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < x.rows(); ++r) {
      if (x(r, c) > x(best, c)) best = r;
    }
    arg[c] = best;
    out(0, c) = x(best, c);
  }
  return t.push(std::move(out), any_grad({a}), [a, arg = std::move(arg)](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    Matrix dx = Matrix::Zero(tp.value(a.id).rows(), tp.value(a.id).cols());
    for (std::size_t c = 0; c < arg.size(); ++c) dx(arg[c], c) = g(0, c);
    tp.accumulate(a.id, dx);
  });
}

Var gru_cell(Var gx, Var h, Var w_h, Var b_h, const Matrix& step_mask) {
  const Eigen::Index H = h.cols();
  const Eigen::Index B = h.rows();
  check_shape(gx.rows() == B && gx.cols() == 3 * H, "gru_cell gx");
  check_shape(w_h.rows() == H && w_h.cols() == 3 * H, "gru_cell w_h");
  check_shape(b_h.rows() == 1 && b_h.cols() == 3 * H, "gru_cell b_h");
  check_shape(step_mask.rows() == B && step_mask.cols() == 1, "gru_cell mask");
  Tape& t = tape_of(gx);

  const Matrix& hv = h.value();
  Matrix gh = hv * w_h.value();
  gh.rowwise() += b_h.value().row(0);
  const Matrix& gxv = gx.value();
  Matrix r = (1.0 + (-(gxv.leftCols(H) + gh.leftCols(H)).array()).exp()).inverse().matrix();
  Matrix u = (1.0 + (-(gxv.middleCols(H, H) + gh.middleCols(H, H)).array()).exp()).inverse().matrix();
  Matrix gh_n = gh.rightCols(H);
  Matrix n = (gxv.rightCols(H).array() + r.array() * gh_n.array()).tanh().matrix();
  Matrix out = ((1.0 - u.array()) * n.array() + u.array() * hv.array()).matrix();
  for (Eigen::Index i = 0; i < B; ++i) {
    if (step_mask(i, 0) == 0.0) out.row(i) = hv.row(i);
  }

  const bool grad = any_grad({gx, h, w_h, b_h});
  return t.push(std::move(out), grad,
                [gx, h, w_h, b_h, H, B, mask = step_mask, r = std::move(r), u = std::move(u),
                 n = std::move(n), gh_n = std::move(gh_n)](Tape& tp, int self) {
                  const Matrix& dout = tp.grad(self);
                  const Matrix& hv = tp.value(h.id);
                  Matrix dhn = dout;
                  Matrix dh = Matrix::Zero(B, H);
                  for (Eigen::Index i = 0; i < B; ++i) {
                    if (mask(i, 0) == 0.0) {
                      dh.row(i) = dout.row(i);
                      dhn.row(i).setZero();
                    }
                  }
                  const auto dn = (dhn.array() * (1.0 - u.array())).eval();
                  const auto du = (dhn.array() * (hv.array() - n.array())).eval();
                  dh.array() += dhn.array() * u.array();
                  const auto dan = (dn * (1.0 - n.array().square())).eval();
                  const auto dr = (dan * gh_n.array()).eval();
                  Matrix dgx(B, 3 * H);
                  dgx.leftCols(H) = (dr * r.array() * (1.0 - r.array())).matrix();
                  dgx.middleCols(H, H) = (du * u.array() * (1.0 - u.array())).matrix();
                  dgx.rightCols(H) = dan.matrix();
                  Matrix dgh = dgx;
                  dgh.rightCols(H) = (dan * r.array()).matrix();
                  tp.accumulate(gx.id, dgx);
                  if (tp.needs_grad(h.id)) {
                    dh.noalias() += dgh * tp.value(w_h.id).transpose();
                    tp.accumulate(h.id, dh);
                  }
                  if (tp.needs_grad(w_h.id)) tp.accumulate_expr(w_h.id, hv.transpose() * dgh);
                  if (tp.needs_grad(b_h.id)) tp.accumulate_expr(b_h.id, dgh.colwise().sum());
                });
}

Var weighted_sse(const std::vector<Var>& pred, const std::vector<Matrix>& target,
                 const std::vector<Matrix>& row_weight) {
  if (pred.empty() || pred.size() != target.size() || pred.size() != row_weight.size()) {
    throw ContractError("weighted_sse argument lengths differ");
  }
  Tape& t = tape_of(pred[0]);
  double total = 0.0;
  bool grad = false;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const Matrix& p = pred[k].value();
    check_shape(p.rows() == target[k].rows() && p.cols() == target[k].cols(), "weighted_sse");
    check_shape(row_weight[k].rows() == p.rows(), "weighted_sse weights");
    grad = grad || t.needs_grad(pred[k].id);
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      const double w = row_weight[k](r, 0);
      if (w == 0.0) continue;
      total += w * (p.row(r) - target[k].row(r)).squaredNorm();
    }
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  return t.push(std::move(out), grad, [pred, target, row_weight](Tape& tp, int self) {
    const double g = tp.grad(self)(0, 0);
    for (std::size_t k = 0; k < pred.size(); ++k) {
      if (!tp.needs_grad(pred[k].id)) continue;
      const Matrix& p = tp.value(pred[k].id);
      Matrix d = Matrix::Zero(p.rows(), p.cols());
      for (Eigen::Index r = 0; r < p.rows(); ++r) {
        const double w = row_weight[k](r, 0);
        if (w == 0.0) continue;
        d.row(r) = 2.0 * g * w * (p.row(r) - target[k].row(r));
      }
      tp.accumulate(pred[k].id, d);
    }
  });
}

Var cross_entropy(Var logits, const std::vector<int>& labels) {
  const Matrix& x = logits.value();
  check_shape(static_cast<std::size_t>(x.rows()) == labels.size(), "cross_entropy");
  Tape& t = tape_of(logits);
  Matrix probs(x.rows(), x.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    probs.row(i) = (x.row(i).array() - m).exp().matrix();
    const double z = probs.row(i).sum();
    probs.row(i) /= z;
    total -= x(i, labels[i]) - m - std::log(z);
  }
  const double n = static_cast<double>(x.rows());
  Matrix out(1, 1);
  out(0, 0) = total / n;
  return t.push(std::move(out), any_grad({logits}),
                [logits, labels, n, probs = std::move(probs)](Tape& tp, int self) {
                  Matrix d = probs;
                  for (std::size_t i = 0; i < labels.size(); ++i) d(i, labels[i]) -= 1.0;
                  tp.accumulate_expr(logits.id, d * (tp.grad(self)(0, 0) / n));
                });
}

}  // namespace strokediff::ad
