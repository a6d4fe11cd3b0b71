#pragma once

#include <cmath>
#include <vector>

#include "avqvc/tensor.hpp"

namespace avqvc {

// Flat list of parameter tensors. Gradients and optimizer moments share the
// same layout so updates are element-wise over matching tensors.
using ParameterSet = std::vector<Matrix>;

inline ParameterSet zeros_like(const ParameterSet& p) {
  ParameterSet z;
  z.reserve(p.size());
  for (const auto& m : p) z.push_back(Matrix::Zero(m.rows(), m.cols()));
  return z;
}

inline void add_into(ParameterSet& acc, const ParameterSet& g, double scale = 1.0) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += scale * g[i];
}

inline double global_norm(const ParameterSet& g) {
  double s = 0.0;
  for (const auto& m : g) s += m.squaredNorm();
  return std::sqrt(s);
}

inline std::size_t parameter_count(const ParameterSet& p) {
  std::size_t n = 0;
  for (const auto& m : p) n += static_cast<std::size_t>(m.size());
  return n;
}

// 1-D convolution over time with zero "same" padding. Weight is stored as a
// (kernel * in) x out matrix against an im2col view of the input; the bias is
// a 1 x out matrix.
struct Conv1dSpec {
  int in = 1;
  int out = 1;
  int kernel = 1;

  int pad_left() const { return (kernel - 1) / 2; }

  Matrix im2col(const Matrix& x) const {
    const Eigen::Index t = x.rows();
    Matrix cols = Matrix::Zero(t, static_cast<Eigen::Index>(kernel) * in);
    for (int j = 0; j < kernel; ++j) {
      const Eigen::Index shift = j - pad_left();
      const Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
      const Eigen::Index hi = std::min<Eigen::Index>(t, t - shift);
      if (hi > lo) cols.block(lo, j * in, hi - lo, in) = x.middleRows(lo + shift, hi - lo);
    }
    return cols;
  }

  Matrix forward(const Matrix& x, const Matrix& weight, const Matrix& bias) const {
    require_shape(x.cols() == in, "conv1d: input width " + std::to_string(x.cols()) + ", expected " +
                                      std::to_string(in));
    Matrix y = im2col(x) * weight;
    y.rowwise() += bias.row(0);
    return y;
  }

  // Accumulates parameter gradients and returns the input gradient.
  Matrix backward(const Matrix& x, const Matrix& dy, const Matrix& weight, Matrix& d_weight,
                  Matrix& d_bias) const {
    const Matrix cols = im2col(x);
    d_weight.noalias() += cols.transpose() * dy;
    d_bias += dy.colwise().sum();
    const Matrix dcols = dy * weight.transpose();
    Matrix dx = Matrix::Zero(x.rows(), in);
    const Eigen::Index t = x.rows();
    for (int j = 0; j < kernel; ++j) {
      const Eigen::Index shift = j - pad_left();
      const Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
      const Eigen::Index hi = std::min<Eigen::Index>(t, t - shift);
      if (hi > lo) dx.middleRows(lo + shift, hi - lo) += dcols.block(lo, j * in, hi - lo, in);
    }
    return dx;
  }
};

// A stack of convolutions with tanh between them (none after the last).
// Parameters live in a ParameterSet starting at `offset`: weight, bias per layer.
struct ConvStack {
  std::vector<Conv1dSpec> layers;
  std::size_t offset = 0;

  std::size_t n_tensors() const { return 2 * layers.size(); }
  int in_width() const { return layers.front().in; }
  int out_width() const { return layers.back().out; }

  static ConvStack make(int in, int width, int depth, int out, int kernel, std::size_t offset) {
    ConvStack s;
    s.offset = offset;
    int cur = in;
    for (int l = 0; l < depth; ++l) {
      s.layers.push_back({cur, width, kernel});
      cur = width;
    }
    s.layers.push_back({cur, out, kernel});
    return s;
  }

  void init(ParameterSet& params, Rng& rng) const {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& spec = layers[l];
      const double stdv = 1.0 / std::sqrt(static_cast<double>(spec.kernel * spec.in));
      std::normal_distribution<double> gauss(0.0, stdv);
      Matrix w(static_cast<Eigen::Index>(spec.kernel) * spec.in, spec.out);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = gauss(rng);
      params[offset + 2 * l] = std::move(w);
      params[offset + 2 * l + 1] = Matrix::Zero(1, spec.out);
    }
  }

  // Activations per layer output (post-tanh for hidden layers); tape[0] is the input.
  struct Tape {
    std::vector<Matrix> values;
    const Matrix& output() const { return values.back(); }
  };

  Tape forward(const Matrix& x, const ParameterSet& params) const {
    Tape tape;
    tape.values.reserve(layers.size() + 1);
    tape.values.push_back(x);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      Matrix y = layers[l].forward(tape.values.back(), params[offset + 2 * l], params[offset + 2 * l + 1]);
      if (l + 1 < layers.size()) y = y.array().tanh().matrix();
      tape.values.push_back(std::move(y));
    }
    return tape;
  }

  Matrix apply(const Matrix& x, const ParameterSet& params) const { return forward(x, params).output(); }

  Matrix backward(const Tape& tape, const Matrix& d_out, const ParameterSet& params, ParameterSet& grads) const {
    Matrix d = d_out;
    for (std::size_t l = layers.size(); l-- > 0;) {
      if (l + 1 < layers.size()) {
        d = (d.array() * (1.0 - tape.values[l + 1].array().square())).matrix();
      }
      d = layers[l].backward(tape.values[l], d, params[offset + 2 * l], grads[offset + 2 * l],
                             grads[offset + 2 * l + 1]);
    }
    return d;
  }
};

}  // namespace avqvc
