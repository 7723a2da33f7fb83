#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "bifuse/optimizer.hpp"
#include "bifuse/tensor.hpp"

namespace bifuse {

// Binary fusion primitives.  Enumerator order is the indexing contract for
// op-selection logits and serialized genotypes, so it must never be
// reordered.
enum class OpKind : int { Zero = 0, Sum = 1, Attention = 2, LinearGlu = 3, ConcatFc = 4 };
inline constexpr int kNumOpKinds = 5;

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::Zero: return "zero";
    case OpKind::Sum: return "sum";
    case OpKind::Attention: return "attention";
    case OpKind::LinearGlu: return "linear_glu";
    case OpKind::ConcatFc: return "concat_fc";
  }
  throw std::invalid_argument("op_name: unknown OpKind");
}

inline OpKind op_from_name(const std::string& s) {
  for (int i = 0; i < kNumOpKinds; ++i)
    if (s == op_name(static_cast<OpKind>(i))) return static_cast<OpKind>(i);
  throw std::invalid_argument("op_from_name: unknown op \"" + s + "\"");
}

// Channel-gated linear unit: out = (value_w x) .* sigmoid(gate_w y).
// Both maps act on the channel axis at every sequence position.
template <typename S>
struct LinearGluParams {
  Param<S> value_w;  // C x C, applied to the first operand
  Param<S> gate_w;   // C x C, applied to the gating operand

  void init(int channels, Rng& rng) {
    value_w.resize(channels, channels);
    gate_w.resize(channels, channels);
    value_w.init_fan_in(rng, channels);
    gate_w.init_fan_in(rng, channels);
  }
  long count() const { return value_w.w.size() + gate_w.w.size(); }
};

// Channel-concat + affine + ReLU: out = relu(w [x; y] + b).
template <typename S>
struct ConcatFcParams {
  Param<S> w;  // C x 2C
  Param<S> b;  // C x 1

  void init(int channels, Rng& rng) {
    w.resize(channels, 2 * channels);
    b.resize(channels, 1);
    w.init_fan_in(rng, 2 * channels);
    // bias stays zero
  }
  long count() const { return w.w.size() + b.w.size(); }
};

// Saved forward state consumed by op_backward.  Operands are copied in;
// tensors here are small enough that this costs less than the bookkeeping
// to share them safely.
template <typename S>
struct OpCache {
  OpKind kind = OpKind::Zero;
  TensorNcl<S> x, y;
  std::vector<MatrixX<S>> attn;      // per-sample L x L attention weights
  MatrixX<S> glu_value, glu_gate;    // value_w x and sigmoid(gate_w y)
  MatrixX<S> cfc_concat, cfc_mask;   // stacked input and ReLU mask
};

template <typename S>
TensorNcl<S> zero_op(const TensorNcl<S>& x, const TensorNcl<S>& y) {
  require_same_shape(x, y, "zero_op");
  return TensorNcl<S>::zeros_like(x);
}

template <typename S>
TensorNcl<S> sum_op(const TensorNcl<S>& x, const TensorNcl<S>& y) {
  require_same_shape(x, y, "sum_op");
  TensorNcl<S> out = x;
  out.m += y.m;
  return out;
}

// Scaled dot-product attention with the first operand as query and the
// second as both key and value.  Single head, no projections: per sample,
// scores = x^T y / sqrt(C) (query position x key position), softmax over
// the key axis, output position r = sum_k A(r,k) y(:,k).
template <typename S>
TensorNcl<S> attention_op(const TensorNcl<S>& x, const TensorNcl<S>& y,
                          OpCache<S>* cache = nullptr) {
  require_same_shape(x, y, "attention_op");
  const int L = x.length;
  const S inv_sqrt_c = S(1) / std::sqrt(S(x.channels));
  TensorNcl<S> out(x.batch, x.channels, x.length);
  if (cache) cache->attn.assign(static_cast<std::size_t>(x.batch), MatrixX<S>());
  for (int n = 0; n < x.batch; ++n) {
    MatrixX<S> scores = (x.sample(n).transpose() * y.sample(n)) * inv_sqrt_c;  // L x L
    if (!scores.allFinite())
      throw std::runtime_error("attention_op: non-finite attention scores");
    MatrixX<S> a(L, L);
    for (int r = 0; r < L; ++r) {
      // max-shifted softmax over the key axis
      S mx = scores.row(r).maxCoeff();
      VectorX<S> e = (scores.row(r).array() - mx).exp().matrix().transpose();
      a.row(r) = (e / e.sum()).transpose();
    }
    out.sample(n) = y.sample(n) * a.transpose();
    if (cache) cache->attn[static_cast<std::size_t>(n)] = std::move(a);
  }
  if (!out.all_finite()) throw std::runtime_error("attention_op: non-finite output");
  if (cache) {
    cache->kind = OpKind::Attention;
    cache->x = x;
    cache->y = y;
  }
  return out;
}

template <typename S>
void attention_backward(const OpCache<S>& cache, const TensorNcl<S>& grad_out,
                        TensorNcl<S>& gx, TensorNcl<S>& gy) {
  const TensorNcl<S>& x = cache.x;
  const TensorNcl<S>& y = cache.y;
  const int L = x.length;
  const S inv_sqrt_c = S(1) / std::sqrt(S(x.channels));
  for (int n = 0; n < x.batch; ++n) {
    const MatrixX<S>& a = cache.attn[static_cast<std::size_t>(n)];
    auto g = grad_out.sample(n);
    // out = y a^T
    gy.sample(n) += g * a;
    MatrixX<S> da = g.transpose() * y.sample(n);  // L x L, (query row, key col)
    MatrixX<S> ds(L, L);
    for (int r = 0; r < L; ++r) {
      S dot = da.row(r).dot(a.row(r));
      ds.row(r) = (a.row(r).array() * (da.row(r).array() - dot)).matrix();
    }
    gx.sample(n) += y.sample(n) * ds.transpose() * inv_sqrt_c;
    gy.sample(n) += x.sample(n) * ds * inv_sqrt_c;
  }
}

template <typename S>
TensorNcl<S> linear_glu_op(const TensorNcl<S>& x, const TensorNcl<S>& y,
                           const LinearGluParams<S>& p, OpCache<S>* cache = nullptr) {
  require_same_shape(x, y, "linear_glu_op");
  require(p.value_w.w.rows() == x.channels && p.value_w.w.cols() == x.channels &&
              p.gate_w.w.rows() == x.channels && p.gate_w.w.cols() == x.channels,
          "linear_glu_op: parameter shape does not match channel count");
  MatrixX<S> value = p.value_w.w * x.m;
  MatrixX<S> gate = (S(1) / (S(1) + (-(p.gate_w.w * y.m).array()).exp())).matrix();
  TensorNcl<S> out(x.batch, x.channels, x.length);
  out.m = value.cwiseProduct(gate);
  if (cache) {
    cache->kind = OpKind::LinearGlu;
    cache->x = x;
    cache->y = y;
    cache->glu_value = std::move(value);
    cache->glu_gate = std::move(gate);
  }
  return out;
}

template <typename S>
void linear_glu_backward(const OpCache<S>& cache, const TensorNcl<S>& grad_out,
                         LinearGluParams<S>& p, TensorNcl<S>& gx, TensorNcl<S>& gy) {
  MatrixX<S> d_value = grad_out.m.cwiseProduct(cache.glu_gate);
  MatrixX<S> d_gate = grad_out.m.cwiseProduct(cache.glu_value);
  // sigmoid'(z) = s (1 - s)
  MatrixX<S> d_gate_pre =
      d_gate.cwiseProduct(cache.glu_gate.cwiseProduct((S(1) - cache.glu_gate.array()).matrix()));
  p.value_w.g += d_value * cache.x.m.transpose();
  p.gate_w.g += d_gate_pre * cache.y.m.transpose();
  gx.m += p.value_w.w.transpose() * d_value;
  gy.m += p.gate_w.w.transpose() * d_gate_pre;
}

template <typename S>
TensorNcl<S> concat_fc_op(const TensorNcl<S>& x, const TensorNcl<S>& y,
                          const ConcatFcParams<S>& p, OpCache<S>* cache = nullptr) {
  require_same_shape(x, y, "concat_fc_op");
  require(p.w.w.rows() == x.channels && p.w.w.cols() == 2 * x.channels &&
              p.b.w.rows() == x.channels && p.b.w.cols() == 1,
          "concat_fc_op: parameter shape does not match channel count");
  MatrixX<S> cc(2 * x.channels, x.m.cols());
  cc.topRows(x.channels) = x.m;
  cc.bottomRows(x.channels) = y.m;
  MatrixX<S> z = p.w.w * cc;
  z.colwise() += VectorX<S>(p.b.w.col(0));
  TensorNcl<S> out(x.batch, x.channels, x.length);
  out.m = z.cwiseMax(S(0));
  if (cache) {
    cache->kind = OpKind::ConcatFc;
    cache->x = x;
    cache->y = y;
    cache->cfc_concat = std::move(cc);
    cache->cfc_mask = (z.array() > S(0)).template cast<S>().matrix();
  }
  return out;
}

template <typename S>
void concat_fc_backward(const OpCache<S>& cache, const TensorNcl<S>& grad_out,
                        ConcatFcParams<S>& p, TensorNcl<S>& gx, TensorNcl<S>& gy) {
  MatrixX<S> dz = grad_out.m.cwiseProduct(cache.cfc_mask);
  p.w.g += dz * cache.cfc_concat.transpose();
  p.b.g += dz.rowwise().sum();
  MatrixX<S> dcc = p.w.w.transpose() * dz;
  const int c = gx.channels;
  gx.m += dcc.topRows(c);
  gy.m += dcc.bottomRows(c);
}

// Dispatch used by cell steps.  Parameter structs are only consulted for
// the kinds that need them.
template <typename S>
TensorNcl<S> op_forward(OpKind k, const TensorNcl<S>& x, const TensorNcl<S>& y,
                        const LinearGluParams<S>* glu, const ConcatFcParams<S>* cfc,
                        OpCache<S>* cache = nullptr) {
  switch (k) {
    case OpKind::Zero: {
      if (cache) {
        cache->kind = k;
        cache->x = x;
        cache->y = y;
      }
      return zero_op(x, y);
    }
    case OpKind::Sum: {
      if (cache) {
        cache->kind = k;
        cache->x = x;
        cache->y = y;
      }
      return sum_op(x, y);
    }
    case OpKind::Attention: return attention_op(x, y, cache);
    case OpKind::LinearGlu:
      require(glu != nullptr, "op_forward: linear_glu requires parameters");
      return linear_glu_op(x, y, *glu, cache);
    case OpKind::ConcatFc:
      require(cfc != nullptr, "op_forward: concat_fc requires parameters");
      return concat_fc_op(x, y, *cfc, cache);
  }
  throw std::invalid_argument("op_forward: unknown OpKind");
}

template <typename S>
void op_backward(const OpCache<S>& cache, const TensorNcl<S>& grad_out,
                 LinearGluParams<S>* glu, ConcatFcParams<S>* cfc, TensorNcl<S>& gx,
                 TensorNcl<S>& gy) {
  switch (cache.kind) {
    case OpKind::Zero: return;  // gradient w.r.t. both operands is identically zero
    case OpKind::Sum:
      gx.m += grad_out.m;
      gy.m += grad_out.m;
      return;
    case OpKind::Attention: attention_backward(cache, grad_out, gx, gy); return;
    case OpKind::LinearGlu:
      require(glu != nullptr, "op_backward: linear_glu requires parameters");
      linear_glu_backward(cache, grad_out, *glu, gx, gy);
      return;
    case OpKind::ConcatFc:
      require(cfc != nullptr, "op_backward: concat_fc requires parameters");
      concat_fc_backward(cache, grad_out, *cfc, gx, gy);
      return;
  }
  throw std::invalid_argument("op_backward: unknown OpKind");
}

// Trainable parameter count of one op instance at a given channel width.
inline long op_param_count(OpKind k, int channels) {
  const long c = channels;
  switch (k) {
    case OpKind::LinearGlu: return 2 * c * c;
    case OpKind::ConcatFc: return 2 * c * c + c;
    default: return 0;
  }
}

}  // namespace bifuse
