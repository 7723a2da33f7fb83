#pragma once

#include <Eigen/Dense>

#include "bifuse/common.hpp"

namespace bifuse {

template <typename S>
using MatrixX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using VectorX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Batched sequence tensor of shape (batch, channels, length), stored as one
// channels x (batch*length) matrix so channel-wise linear maps are a single
// GEMM.  Column n*length + l holds sample n at sequence position l; a
// sample's positions are therefore a contiguous column block.
template <typename S>
struct TensorNcl {
  int batch = 0;
  int channels = 0;
  int length = 0;
  MatrixX<S> m;  // channels x (batch*length)

  TensorNcl() = default;
  TensorNcl(int n, int c, int l) : batch(n), channels(c), length(l) {
    require(n >= 1 && c >= 1 && l >= 1, "TensorNcl: all dimensions must be >= 1");
    m.setZero(c, static_cast<Eigen::Index>(n) * l);
  }

  static TensorNcl zeros_like(const TensorNcl& t) {
    return TensorNcl(t.batch, t.channels, t.length);
  }

  bool same_shape(const TensorNcl& o) const {
    return batch == o.batch && channels == o.channels && length == o.length;
  }

  // View of sample n: channels x length.
  auto sample(int n) { return m.middleCols(static_cast<Eigen::Index>(n) * length, length); }
  auto sample(int n) const { return m.middleCols(static_cast<Eigen::Index>(n) * length, length); }

  S operator()(int n, int c, int l) const { return m(c, static_cast<Eigen::Index>(n) * length + l); }
  S& operator()(int n, int c, int l) { return m(c, static_cast<Eigen::Index>(n) * length + l); }

  bool all_finite() const { return m.allFinite(); }
};

template <typename S>
void require_same_shape(const TensorNcl<S>& a, const TensorNcl<S>& b, const char* who) {
  require(a.same_shape(b), std::string(who) + ": operand shapes differ");
}

template <typename S>
TensorNcl<S> random_tensor(int n, int c, int l, Rng& rng, S scale = S(1)) {
  TensorNcl<S> t(n, c, l);
  std::normal_distribution<double> d(0.0, 1.0);
  for (Eigen::Index j = 0; j < t.m.cols(); ++j)
    for (Eigen::Index i = 0; i < t.m.rows(); ++i) t.m(i, j) = static_cast<S>(d(rng)) * scale;
  return t;
}

// Mean over the sequence axis: returns channels x batch.
template <typename S>
MatrixX<S> mean_over_length(const TensorNcl<S>& t) {
  MatrixX<S> out(t.channels, t.batch);
  for (int n = 0; n < t.batch; ++n) out.col(n) = t.sample(n).rowwise().sum() / S(t.length);
  return out;
}

// Adjoint of mean_over_length: spreads each sample's gradient uniformly
// across its sequence positions.
template <typename S>
void add_mean_over_length_grad(const MatrixX<S>& g_pooled, TensorNcl<S>& g_t) {
  for (int n = 0; n < g_t.batch; ++n)
    g_t.sample(n).colwise() += VectorX<S>(g_pooled.col(n) / S(g_t.length));
}

}  // namespace bifuse
