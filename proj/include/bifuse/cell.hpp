#pragma once

#include <array>
#include <vector>

#include "bifuse/primitive_ops.hpp"

namespace bifuse {

template <typename S>
VectorX<S> softmax(const VectorX<S>& logits) {
  require(logits.size() >= 1, "softmax: empty logit vector");
  VectorX<S> e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

// d(loss)/d(logits) given the softmax output p and d(loss)/d(p).
template <typename S>
VectorX<S> softmax_backward(const VectorX<S>& p, const VectorX<S>& dp) {
  S dot = p.dot(dp);
  return (p.array() * (dp.array() - dot)).matrix();
}

// Argmax with ties resolved toward the lowest index, so derivation is
// deterministic even on exactly tied logits.
template <typename S>
int argmax_lowest(const VectorX<S>& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return best;
}

// Discrete choice of one fusion step: two predecessor slots (indices into
// the cell's node list; repeats are allowed) and an op.
struct StepGene {
  int src_x = 0;
  int src_y = 0;
  OpKind op = OpKind::Zero;

  bool operator==(const StepGene&) const = default;
};

// Relaxed parameters of one step: slot-selection logits over the step's
// predecessors, op-selection logits over the primitive pool, and the
// candidate parameters for the parameterized ops.
template <typename S>
struct StepArch {
  Param<S> slot_x_logits;  // n_predecessors x 1
  Param<S> slot_y_logits;  // n_predecessors x 1
  Param<S> op_logits;      // kNumOpKinds x 1
  LinearGluParams<S> glu;
  ConcatFcParams<S> cfc;

  void init(int n_predecessors, int channels, Rng& rng, S logit_noise) {
    slot_x_logits.resize(n_predecessors, 1);
    slot_y_logits.resize(n_predecessors, 1);
    op_logits.resize(kNumOpKinds, 1);
    slot_x_logits.init_logit_noise(rng, logit_noise);
    slot_y_logits.init_logit_noise(rng, logit_noise);
    op_logits.init_logit_noise(rng, logit_noise);
    // A cell's first step sees the same mixed tensor in both predecessor
    // slots, so its slot logits receive no gradient and their argmax would
    // otherwise be frozen initialization noise.  This small deterministic
    // preference (x from slot 0, y from slot 1) makes the derived step
    // consume both selected inputs unless training actively overrides it.
    slot_x_logits.w(0, 0) += S(0.05);
    slot_y_logits.w(1, 0) += S(0.05);
    glu.init(channels, rng);
    cfc.init(channels, rng);
  }

  void collect_arch(std::vector<Param<S>*>& out) {
    out.push_back(&slot_x_logits);
    out.push_back(&slot_y_logits);
    out.push_back(&op_logits);
  }
  void collect_weights(std::vector<Param<S>*>& out) {
    out.push_back(&glu.value_w);
    out.push_back(&glu.gate_w);
    out.push_back(&cfc.w);
    out.push_back(&cfc.b);
  }
};

template <typename S>
struct StepCache {
  VectorX<S> px, py, q;
  TensorNcl<S> mixed_x, mixed_y;
  std::array<OpCache<S>, kNumOpKinds> op_caches;
  std::array<TensorNcl<S>, kNumOpKinds> op_outs;
};

// Soft mixture over predecessors and ops: each slot is a softmax-weighted
// sum of all predecessors, and the step output is the softmax-weighted sum
// of every primitive applied to that slot pair.
template <typename S>
TensorNcl<S> step_forward_relaxed(const std::vector<const TensorNcl<S>*>& preds,
                                  const StepArch<S>& arch, StepCache<S>* cache = nullptr) {
  require(!preds.empty(), "step_forward_relaxed: empty predecessor list");
  require(arch.slot_x_logits.w.rows() == static_cast<Eigen::Index>(preds.size()) &&
              arch.slot_y_logits.w.rows() == static_cast<Eigen::Index>(preds.size()),
          "step_forward_relaxed: slot logit count does not match predecessors");
  VectorX<S> px = softmax<S>(arch.slot_x_logits.w.col(0));
  VectorX<S> py = softmax<S>(arch.slot_y_logits.w.col(0));
  TensorNcl<S> mx = TensorNcl<S>::zeros_like(*preds[0]);
  TensorNcl<S> my = TensorNcl<S>::zeros_like(*preds[0]);
  for (std::size_t j = 0; j < preds.size(); ++j) {
    require(preds[j]->same_shape(*preds[0]), "step_forward_relaxed: predecessor shapes differ");
    mx.m += px(static_cast<Eigen::Index>(j)) * preds[j]->m;
    my.m += py(static_cast<Eigen::Index>(j)) * preds[j]->m;
  }
  VectorX<S> q = softmax<S>(arch.op_logits.w.col(0));
  TensorNcl<S> out = TensorNcl<S>::zeros_like(mx);
  for (int f = 0; f < kNumOpKinds; ++f) {
    OpKind k = static_cast<OpKind>(f);
    OpCache<S>* oc = cache ? &cache->op_caches[static_cast<std::size_t>(f)] : nullptr;
    TensorNcl<S> fo = op_forward(k, mx, my, &arch.glu, &arch.cfc, oc);
    out.m += q(f) * fo.m;
    if (cache) cache->op_outs[static_cast<std::size_t>(f)] = std::move(fo);
  }
  if (cache) {
    cache->px = std::move(px);
    cache->py = std::move(py);
    cache->q = std::move(q);
    cache->mixed_x = std::move(mx);
    cache->mixed_y = std::move(my);
  }
  return out;
}

// Accumulates gradients into the arch (logits + op params) and into
// grad_preds, which must alias the predecessor list used in the forward.
template <typename S>
void step_backward_relaxed(const StepCache<S>& cache, StepArch<S>& arch,
                           const std::vector<const TensorNcl<S>*>& preds,
                           const TensorNcl<S>& grad_out,
                           const std::vector<TensorNcl<S>*>& grad_preds) {
  TensorNcl<S> d_mx = TensorNcl<S>::zeros_like(cache.mixed_x);
  TensorNcl<S> d_my = TensorNcl<S>::zeros_like(cache.mixed_y);
  VectorX<S> dq(kNumOpKinds);
  TensorNcl<S> scaled = TensorNcl<S>::zeros_like(grad_out);
  for (int f = 0; f < kNumOpKinds; ++f) {
    const auto& fo = cache.op_outs[static_cast<std::size_t>(f)];
    dq(f) = (grad_out.m.array() * fo.m.array()).sum();
    scaled.m = cache.q(f) * grad_out.m;
    op_backward(cache.op_caches[static_cast<std::size_t>(f)], scaled, &arch.glu, &arch.cfc,
                d_mx, d_my);
  }
  arch.op_logits.g.col(0) += softmax_backward(cache.q, dq);

  VectorX<S> dpx(preds.size()), dpy(preds.size());
  for (std::size_t j = 0; j < preds.size(); ++j) {
    grad_preds[j]->m += cache.px(static_cast<Eigen::Index>(j)) * d_mx.m +
                        cache.py(static_cast<Eigen::Index>(j)) * d_my.m;
    dpx(static_cast<Eigen::Index>(j)) = (d_mx.m.array() * preds[j]->m.array()).sum();
    dpy(static_cast<Eigen::Index>(j)) = (d_my.m.array() * preds[j]->m.array()).sum();
  }
  arch.slot_x_logits.g.col(0) += softmax_backward(cache.px, dpx);
  arch.slot_y_logits.g.col(0) += softmax_backward(cache.py, dpy);
}

// Discretize one step: argmax op and argmax slot sources (repeats allowed).
template <typename S>
StepGene derive_step(const StepArch<S>& arch) {
  StepGene g;
  g.src_x = argmax_lowest<S>(arch.slot_x_logits.w.col(0));
  g.src_y = argmax_lowest<S>(arch.slot_y_logits.w.col(0));
  g.op = static_cast<OpKind>(argmax_lowest<S>(arch.op_logits.w.col(0)));
  return g;
}

// How a cell aggregates its step outputs.  SumSteps is the default; the
// LastStep mode exists to compare against emitting only the final step.
enum class CellOutputMode { SumSteps, LastStep };

// Relaxed parameters of a whole cell: step i sees 2 + i predecessors (the
// two cell inputs plus all earlier step outputs).
template <typename S>
struct CellArch {
  std::vector<StepArch<S>> steps;

  void init(int n_steps, int channels, Rng& rng, S logit_noise) {
    require(n_steps >= 1, "CellArch: at least one step required");
    steps.resize(static_cast<std::size_t>(n_steps));
    for (int i = 0; i < n_steps; ++i)
      steps[static_cast<std::size_t>(i)].init(2 + i, channels, rng, logit_noise);
  }

  void collect_arch(std::vector<Param<S>*>& out) {
    for (auto& s : steps) s.collect_arch(out);
  }
  void collect_weights(std::vector<Param<S>*>& out) {
    for (auto& s : steps) s.collect_weights(out);
  }
};

template <typename S>
struct CellCache {
  std::vector<TensorNcl<S>> nodes;  // [x, y, step outputs...]
  std::vector<StepCache<S>> steps;
};

template <typename S>
TensorNcl<S> cell_forward_relaxed(const TensorNcl<S>& x, const TensorNcl<S>& y,
                                  const CellArch<S>& arch, CellCache<S>* cache = nullptr,
                                  CellOutputMode mode = CellOutputMode::SumSteps) {
  require_same_shape(x, y, "cell_forward_relaxed");
  std::vector<TensorNcl<S>> nodes;
  nodes.reserve(2 + arch.steps.size());
  nodes.push_back(x);
  nodes.push_back(y);
  if (cache) cache->steps.resize(arch.steps.size());
  TensorNcl<S> out = TensorNcl<S>::zeros_like(x);
  for (std::size_t i = 0; i < arch.steps.size(); ++i) {
    std::vector<const TensorNcl<S>*> preds;
    preds.reserve(nodes.size());
    for (const auto& t : nodes) preds.push_back(&t);
    TensorNcl<S> so = step_forward_relaxed(preds, arch.steps[i], cache ? &cache->steps[i] : nullptr);
    if (mode == CellOutputMode::SumSteps)
      out.m += so.m;
    else if (i + 1 == arch.steps.size())
      out.m = so.m;
    nodes.push_back(std::move(so));
  }
  if (cache) cache->nodes = std::move(nodes);
  return out;
}

// Accumulates into gx, gy and the arch's logit/op-param gradients.
template <typename S>
void cell_backward_relaxed(const CellCache<S>& cache, CellArch<S>& arch,
                           const TensorNcl<S>& grad_out, TensorNcl<S>& gx, TensorNcl<S>& gy,
                           CellOutputMode mode = CellOutputMode::SumSteps) {
  const std::size_t m = arch.steps.size();
  std::vector<TensorNcl<S>> d_nodes;
  d_nodes.reserve(cache.nodes.size());
  for (const auto& t : cache.nodes) d_nodes.push_back(TensorNcl<S>::zeros_like(t));
  if (mode == CellOutputMode::SumSteps) {
    for (std::size_t i = 0; i < m; ++i) d_nodes[2 + i].m += grad_out.m;
  } else {
    d_nodes[1 + m].m += grad_out.m;
  }
  for (std::size_t i = m; i-- > 0;) {
    std::vector<const TensorNcl<S>*> preds;
    std::vector<TensorNcl<S>*> grad_preds;
    preds.reserve(2 + i);
    grad_preds.reserve(2 + i);
    for (std::size_t j = 0; j < 2 + i; ++j) {
      preds.push_back(&cache.nodes[j]);
      grad_preds.push_back(&d_nodes[j]);
    }
    step_backward_relaxed(cache.steps[i], arch.steps[i], preds, d_nodes[2 + i], grad_preds);
  }
  gx.m += d_nodes[0].m;
  gy.m += d_nodes[1].m;
}

// One derived (post-search) step: its gene plus parameters for its op.
// Parameter structs for unused kinds stay empty.
template <typename S>
struct DiscreteStep {
  StepGene gene;
  LinearGluParams<S> glu;
  ConcatFcParams<S> cfc;

  void init(const StepGene& g, int n_predecessors, int channels, Rng& rng) {
    require(g.src_x >= 0 && g.src_x < n_predecessors && g.src_y >= 0 &&
                g.src_y < n_predecessors,
            "DiscreteStep: slot source index out of range");
    gene = g;
    if (g.op == OpKind::LinearGlu) glu.init(channels, rng);
    if (g.op == OpKind::ConcatFc) cfc.init(channels, rng);
  }

  void collect_weights(std::vector<Param<S>*>& out) {
    if (gene.op == OpKind::LinearGlu) {
      out.push_back(&glu.value_w);
      out.push_back(&glu.gate_w);
    }
    if (gene.op == OpKind::ConcatFc) {
      out.push_back(&cfc.w);
      out.push_back(&cfc.b);
    }
  }
  long count() const { return glu.value_w.w.size() + glu.gate_w.w.size() + cfc.w.w.size() + cfc.b.w.size(); }
};

template <typename S>
struct DiscreteCellCache {
  std::vector<TensorNcl<S>> nodes;
  std::vector<OpCache<S>> steps;
};

template <typename S>
TensorNcl<S> cell_forward_discrete(const TensorNcl<S>& x, const TensorNcl<S>& y,
                                   std::vector<DiscreteStep<S>>& steps,
                                   DiscreteCellCache<S>* cache = nullptr,
                                   CellOutputMode mode = CellOutputMode::SumSteps) {
  require_same_shape(x, y, "cell_forward_discrete");
  require(!steps.empty(), "cell_forward_discrete: at least one step required");
  std::vector<TensorNcl<S>> nodes;
  nodes.reserve(2 + steps.size());
  nodes.push_back(x);
  nodes.push_back(y);
  if (cache) cache->steps.resize(steps.size());
  TensorNcl<S> out = TensorNcl<S>::zeros_like(x);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const StepGene& g = steps[i].gene;
    require(g.src_x < static_cast<int>(nodes.size()) && g.src_y < static_cast<int>(nodes.size()),
            "cell_forward_discrete: slot source index out of range");
    TensorNcl<S> so =
        op_forward(g.op, nodes[static_cast<std::size_t>(g.src_x)],
                   nodes[static_cast<std::size_t>(g.src_y)], &steps[i].glu, &steps[i].cfc,
                   cache ? &cache->steps[i] : nullptr);
    if (mode == CellOutputMode::SumSteps)
      out.m += so.m;
    else if (i + 1 == steps.size())
      out.m = so.m;
    nodes.push_back(std::move(so));
  }
  if (cache) cache->nodes = std::move(nodes);
  return out;
}

template <typename S>
void cell_backward_discrete(const DiscreteCellCache<S>& cache,
                            std::vector<DiscreteStep<S>>& steps, const TensorNcl<S>& grad_out,
                            TensorNcl<S>& gx, TensorNcl<S>& gy,
                            CellOutputMode mode = CellOutputMode::SumSteps) {
  const std::size_t m = steps.size();
  std::vector<TensorNcl<S>> d_nodes;
  d_nodes.reserve(cache.nodes.size());
  for (const auto& t : cache.nodes) d_nodes.push_back(TensorNcl<S>::zeros_like(t));
  if (mode == CellOutputMode::SumSteps) {
    for (std::size_t i = 0; i < m; ++i) d_nodes[2 + i].m += grad_out.m;
  } else {
    d_nodes[1 + m].m += grad_out.m;
  }
  for (std::size_t i = m; i-- > 0;) {
    const StepGene& g = steps[i].gene;
    op_backward(cache.steps[i], d_nodes[2 + i], &steps[i].glu, &steps[i].cfc,
                d_nodes[static_cast<std::size_t>(g.src_x)],
                d_nodes[static_cast<std::size_t>(g.src_y)]);
  }
  gx.m += d_nodes[0].m;
  gy.m += d_nodes[1].m;
}

}  // namespace bifuse
