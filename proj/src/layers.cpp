#include "strokediff/layers.hpp"

#include <cmath>

#include "strokediff/errors.hpp"

namespace strokediff {

RowVector time_embedding(int t, int dim) {
  if (dim <= 0 || dim % 2 != 0) throw ConfigError("time embedding dimension must be positive and even");
  RowVector e(dim);
  for (int i = 0; i < dim / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * i / dim);
    e(2 * i) = std::sin(t * freq);
    e(2 * i + 1) = std::cos(t * freq);
  }
  return e;
}

Matrix time_embedding_rows(const std::vector<int>& steps, int dim) {
  Matrix m(static_cast<Eigen::Index>(steps.size()), dim);
  for (std::size_t i = 0; i < steps.size(); ++i) m.row(i) = time_embedding(steps[i], dim);
  return m;
}

Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = bound * (2.0 * rng.uniform() - 1.0);
  return m;
}

ad::Var bind(ad::Tape& tape, const ad::Parameter& p) {
  if (!tape.recording()) return tape.constant(p.value);
  // Recording tapes accumulate into p.grad during backward().
  return tape.param(const_cast<ad::Parameter&>(p));
}

Linear Linear::create(ad::ParameterStore& store, const std::string& prefix, int in, int out, Rng& rng,
                      double init_gain) {
  const double bound = init_gain / std::sqrt(static_cast<double>(in));
  store.add(prefix + ".w", uniform_init(in, out, bound, rng));
  store.add(prefix + ".b", Matrix::Zero(1, out));
  return Linear{prefix};
}

ad::Var Linear::apply(ad::Tape& tape, const ad::ParameterStore& store, ad::Var x) const {
  return ad::add_row(ad::matmul(x, bind(tape, store.at(prefix + ".w"))), bind(tape, store.at(prefix + ".b")));
}

GruDirection GruDirection::create(ad::ParameterStore& store, const std::string& prefix, int in, int hidden,
                                  Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  store.add(prefix + ".w_x", uniform_init(in, 3 * hidden, bound, rng));
  store.add(prefix + ".b_x", uniform_init(1, 3 * hidden, bound, rng));
  store.add(prefix + ".w_h", uniform_init(hidden, 3 * hidden, bound, rng));
  store.add(prefix + ".b_h", uniform_init(1, 3 * hidden, bound, rng));
  return GruDirection{prefix, hidden};
}

BiGruResult run_bigru(ad::Tape& tape, const ad::ParameterStore& store, const GruDirection& fwd,
                      const GruDirection& bwd, const std::vector<ad::Var>& inputs,
                      const std::vector<Matrix>& step_masks) {
  const std::size_t L = inputs.size();
  if (L == 0 || step_masks.size() != L) throw ContractError("run_bigru needs one mask per element");
  const Eigen::Index B = inputs[0].rows();
  BiGruResult out;
  out.forward.resize(L);
  out.backward.resize(L);

  auto direction = [&](const GruDirection& d, bool reverse, std::vector<ad::Var>& states) {
    const ad::Var w_x = bind(tape, store.at(d.prefix + ".w_x"));
    const ad::Var b_x = bind(tape, store.at(d.prefix + ".b_x"));
    const ad::Var w_h = bind(tape, store.at(d.prefix + ".w_h"));
    const ad::Var b_h = bind(tape, store.at(d.prefix + ".b_h"));
    ad::Var h = tape.constant(Matrix::Zero(B, d.hidden));
    for (std::size_t k = 0; k < L; ++k) {
      const std::size_t j = reverse ? L - 1 - k : k;
      const ad::Var gx = ad::add_row(ad::matmul(inputs[j], w_x), b_x);
      h = ad::gru_cell(gx, h, w_h, b_h, step_masks[j]);
      states[j] = h;
    }
    return h;
  };
  out.forward_final = direction(fwd, false, out.forward);
  out.backward_final = direction(bwd, true, out.backward);
  return out;
}

std::vector<Matrix> time_major(const std::vector<Matrix>& batch_major) {
  if (batch_major.empty()) return {};
  const Eigen::Index L = batch_major[0].rows();
  const Eigen::Index C = batch_major[0].cols();
  const Eigen::Index B = static_cast<Eigen::Index>(batch_major.size());
  std::vector<Matrix> out(L, Matrix(B, C));
  for (Eigen::Index b = 0; b < B; ++b) {
    if (batch_major[b].rows() != L || batch_major[b].cols() != C) {
      throw ContractError("batch items must share one padded shape");
    }
    for (Eigen::Index j = 0; j < L; ++j) out[j].row(b) = batch_major[b].row(j);
  }
  return out;
}

std::vector<Matrix> time_major_masks(const Matrix& mask) {
  std::vector<Matrix> out;
  out.reserve(mask.cols());
  for (Eigen::Index j = 0; j < mask.cols(); ++j) out.push_back(mask.col(j));
  return out;
}

Matrix cumulative_positions(const Matrix& velocities) {
  Matrix x(velocities.rows(), 2);
  double sx = 0.0;
  double sy = 0.0;
  for (Eigen::Index j = 0; j < velocities.rows(); ++j) {
    sx += velocities(j, 0);
    sy += velocities(j, 1);
    x(j, 0) = sx;
    x(j, 1) = sy;
  }
  return x;
}

}  // namespace strokediff
