#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <vector>

#include "bifuse/cell.hpp"
#include "bifuse/feature_adapter.hpp"
#include "bifuse/genotype.hpp"

namespace bifuse {

enum class TaskMode { Multiclass, Multilabel };

inline const char* task_mode_name(TaskMode m) {
  return m == TaskMode::Multiclass ? "multiclass" : "multilabel";
}
inline TaskMode task_mode_from_name(const std::string& s) {
  if (s == "multiclass") return TaskMode::Multiclass;
  if (s == "multilabel") return TaskMode::Multilabel;
  throw std::invalid_argument("task mode: expected multiclass or multilabel, got \"" + s + "\"");
}

// --- upper-level edge relaxation ------------------------------------------

// Softmax share of the identity branch of one edge's {identity, zero} pair.
template <typename S>
S identity_weight(S id_logit, S zero_logit) {
  S m = std::max(id_logit, zero_logit);
  S ei = std::exp(id_logit - m);
  S ez = std::exp(zero_logit - m);
  return ei / (ei + ez);
}

// Relaxed edge: the node value scaled by its identity share.  edge_logits
// holds (identity, zero).
template <typename S>
TensorNcl<S> mixed_edge(const VectorX<S>& edge_logits, const TensorNcl<S>& s) {
  require(edge_logits.size() == 2, "mixed_edge: expected exactly two logits");
  TensorNcl<S> out = s;
  out.m *= identity_weight(edge_logits(0), edge_logits(1));
  return out;
}

// Discrete input selection for one cell: the pair (i, j), i < j, maximizing
// the product of per-edge identity shares.  Ties resolve to the
// lexicographically smallest pair.
inline std::pair<int, int> derive_cell_inputs(const std::vector<double>& id_weights) {
  require(id_weights.size() >= 2, "derive_cell_inputs: need at least two candidate nodes");
  int best_i = 0, best_j = 1;
  double best = id_weights[0] * id_weights[1];
  for (std::size_t i = 0; i < id_weights.size(); ++i)
    for (std::size_t j = i + 1; j < id_weights.size(); ++j) {
      double p = id_weights[i] * id_weights[j];
      if (p > best) {
        best = p;
        best_i = static_cast<int>(i);
        best_j = static_cast<int>(j);
      }
    }
  return {best_i, best_j};
}

// Size of the upper-level pair-selection space over n candidate features.
enum class PairScheme { CellByCell, Pairwise };

inline long count_candidate_pairs(int n_features, PairScheme scheme) {
  require(n_features >= 2, "count_candidate_pairs: need at least two features");
  switch (scheme) {
    case PairScheme::CellByCell: return 2L * n_features;
    case PairScheme::Pairwise: return static_cast<long>(n_features) * (n_features - 1) / 2;
  }
  throw std::invalid_argument("count_candidate_pairs: unknown scheme");
}

// --- task head and losses ---------------------------------------------------

// Classifier head shared by the relaxed and discrete networks: mean-pool
// over the sequence axis, dropout while training, affine map to class logits.
template <typename S>
struct TaskHead {
  Param<S> w;  // n_classes x channels
  Param<S> b;  // n_classes x 1
  S dropout_rate = S(0);

  void init(int channels, int n_classes, S dropout, Rng& rng) {
    require(n_classes >= 1, "TaskHead: n_classes must be >= 1");
    require(dropout >= S(0) && dropout < S(1), "TaskHead: dropout must lie in [0, 1)");
    dropout_rate = dropout;
    w.resize(n_classes, channels);
    b.resize(n_classes, 1);
    w.init_fan_in(rng, channels);
  }

  struct Cache {
    MatrixX<S> pooled;   // channels x batch, before dropout
    MatrixX<S> dropped;  // after dropout (== pooled in eval mode)
    MatrixX<S> mask;     // empty in eval mode
    int length = 1;
  };

  MatrixX<S> forward(const TensorNcl<S>& x, bool training, Rng* rng,
                     Cache* cache = nullptr) const {
    MatrixX<S> pooled = mean_over_length(x);
    MatrixX<S> dropped;
    MatrixX<S> mask;
    if (training && dropout_rate > S(0)) {
      require(rng != nullptr, "TaskHead: dropout in training mode needs an RNG");
      std::bernoulli_distribution keep(1.0 - double(dropout_rate));
      mask.resize(pooled.rows(), pooled.cols());
      const S inv_keep = S(1) / (S(1) - dropout_rate);
      for (Eigen::Index j = 0; j < mask.cols(); ++j)
        for (Eigen::Index i = 0; i < mask.rows(); ++i)
          mask(i, j) = keep(*rng) ? inv_keep : S(0);
      dropped = pooled.cwiseProduct(mask);
    } else {
      dropped = pooled;
    }
    MatrixX<S> logits = w.w * dropped;
    logits.colwise() += VectorX<S>(b.w.col(0));
    if (cache) {
      cache->pooled = std::move(pooled);
      cache->dropped = std::move(dropped);
      cache->mask = std::move(mask);
      cache->length = x.length;
    }
    return logits;
  }

  void backward(const Cache& cache, const MatrixX<S>& d_logits, TensorNcl<S>& gx) {
    w.g += d_logits * cache.dropped.transpose();
    b.g += d_logits.rowwise().sum();
    MatrixX<S> d_dropped = w.w.transpose() * d_logits;
    if (cache.mask.size() > 0) d_dropped = d_dropped.cwiseProduct(cache.mask);
    add_mean_over_length_grad(d_dropped, gx);
  }

  void collect(std::vector<Param<S>*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
  long count() const { return w.w.size() + b.w.size(); }
};

// Mean softmax cross-entropy over the batch; fills d_logits when given.
template <typename S>
S multiclass_cross_entropy(const MatrixX<S>& logits, const Eigen::VectorXi& labels,
                           MatrixX<S>* d_logits = nullptr) {
  const Eigen::Index k = logits.rows(), n = logits.cols();
  require(labels.size() == n, "multiclass_cross_entropy: label count != batch");
  S loss = S(0);
  if (d_logits) d_logits->setZero(k, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    require(labels(j) >= 0 && labels(j) < k, "multiclass_cross_entropy: label out of range");
    VectorX<S> p = softmax<S>(logits.col(j));
    loss -= std::log(std::max(p(labels(j)), S(1e-300)));
    if (d_logits) {
      d_logits->col(j) = p / S(n);
      (*d_logits)(labels(j), j) -= S(1) / S(n);
    }
  }
  return loss / S(n);
}

// Mean per-class sigmoid binary cross-entropy; targets are a 0/1 matrix of
// the same shape as logits.
template <typename S>
S multilabel_bce(const MatrixX<S>& logits, const MatrixX<S>& targets,
                 MatrixX<S>* d_logits = nullptr) {
  require(logits.rows() == targets.rows() && logits.cols() == targets.cols(),
          "multilabel_bce: logits/targets shape mismatch");
  const S count = S(logits.size());
  // stable log(1 + exp(-|z|)) formulation
  S loss = S(0);
  for (Eigen::Index j = 0; j < logits.cols(); ++j)
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      S z = logits(i, j), t = targets(i, j);
      loss += std::max(z, S(0)) - z * t + std::log1p(std::exp(-std::abs(z)));
    }
  if (d_logits) {
    *d_logits = ((S(1) / (S(1) + (-logits.array()).exp())) - targets.array()).matrix() / count;
  }
  return loss / count;
}

// --- relaxed hypernetwork ---------------------------------------------------

template <typename S>
struct HypernetCache {
  std::vector<TensorNcl<S>> nodes;            // adapted features then cell outputs
  std::vector<VectorX<S>> edge_id_weights;    // per cell, identity share per predecessor
  std::vector<TensorNcl<S>> cell_inputs;      // per cell, the mixed input tensor
  std::vector<CellCache<S>> cells;
  typename TaskHead<S>::Cache head;
};

// The relaxed search network: every feature is adapted to the common
// (batch, channels, seq_len) shape, every cell input is a softmax-weighted
// sum over all earlier nodes, cells run in relaxed mode, and the head reads
// the last cell.
template <typename S>
class Hypernet {
 public:
  Hypernet(const SearchSpaceConfig& space, std::vector<int> raw_channels, int n_classes,
           TaskMode mode, S dropout, std::uint64_t seed, S logit_noise = S(1e-3))
      : space_(space), raw_channels_(std::move(raw_channels)), mode_(mode) {
    validate_search_space(space_);
    require(static_cast<int>(raw_channels_.size()) == space_.n_features(),
            "Hypernet: one raw channel count per feature required");
    Rng wrng = make_rng(seed, 0);
    Rng arng = make_rng(seed, 1);
    adapters_.resize(raw_channels_.size());
    for (std::size_t f = 0; f < raw_channels_.size(); ++f) {
      require(raw_channels_[f] >= 1, "Hypernet: raw channel counts must be >= 1");
      adapters_[f].init(space_.channels, raw_channels_[f], wrng);
    }
    cells_.resize(static_cast<std::size_t>(space_.n_cells));
    edges_.resize(cells_.size());
    for (int k = 0; k < space_.n_cells; ++k) {
      cells_[static_cast<std::size_t>(k)].init(space_.steps_per_cell, space_.channels, arng,
                                               logit_noise);
      // one (identity, zero) logit row per predecessor node
      edges_[static_cast<std::size_t>(k)].resize(space_.cell_position(k), 2);
      edges_[static_cast<std::size_t>(k)].init_logit_noise(arng, logit_noise);
    }
    head_.init(space_.channels, n_classes, dropout, wrng);
  }

  // `prepared[f]` is pool_and_interp output for feature f over the batch.
  MatrixX<S> forward(const std::vector<MatrixX<S>>& prepared, int batch, bool training,
                     Rng* dropout_rng, HypernetCache<S>* cache = nullptr) {
    require(prepared.size() == adapters_.size(),
            "Hypernet: prepared feature count does not match space");
    std::vector<TensorNcl<S>> nodes;
    nodes.reserve(prepared.size() + cells_.size());
    for (std::size_t f = 0; f < prepared.size(); ++f)
      nodes.push_back(adapters_[f].forward(prepared[f], batch, space_.seq_len));
    if (cache) {
      cache->edge_id_weights.resize(cells_.size());
      cache->cell_inputs.resize(cells_.size());
      cache->cells.resize(cells_.size());
    }
    for (std::size_t k = 0; k < cells_.size(); ++k) {
      const Eigen::Index n_pred = edges_[k].w.rows();
      VectorX<S> wid(n_pred);
      for (Eigen::Index i = 0; i < n_pred; ++i)
        wid(i) = identity_weight(edges_[k].w(i, 0), edges_[k].w(i, 1));
      TensorNcl<S> mixed(batch, space_.channels, space_.seq_len);
      for (Eigen::Index i = 0; i < n_pred; ++i)
        mixed.m += wid(i) * nodes[static_cast<std::size_t>(i)].m;
      TensorNcl<S> out = cell_forward_relaxed(mixed, mixed, cells_[k],
                                              cache ? &cache->cells[k] : nullptr);
      if (cache) {
        cache->edge_id_weights[k] = std::move(wid);
        cache->cell_inputs[k] = std::move(mixed);
      }
      nodes.push_back(std::move(out));
    }
    MatrixX<S> logits =
        head_.forward(nodes.back(), training, dropout_rng, cache ? &cache->head : nullptr);
    if (cache) cache->nodes = std::move(nodes);
    return logits;
  }

  void backward(const HypernetCache<S>& cache, const std::vector<MatrixX<S>>& prepared,
                const MatrixX<S>& d_logits) {
    const std::size_t nf = adapters_.size();
    std::vector<TensorNcl<S>> d_nodes;
    d_nodes.reserve(cache.nodes.size());
    for (const auto& t : cache.nodes) d_nodes.push_back(TensorNcl<S>::zeros_like(t));
    head_.backward(cache.head, d_logits, d_nodes.back());
    for (std::size_t k = cells_.size(); k-- > 0;) {
      TensorNcl<S> d_in = TensorNcl<S>::zeros_like(cache.cell_inputs[k]);
      // the mixed tensor feeds both cell slots, so both slot gradients
      // accumulate into d_in
      cell_backward_relaxed(cache.cells[k], cells_[k], d_nodes[nf + k], d_in, d_in);
      const VectorX<S>& wid = cache.edge_id_weights[k];
      for (Eigen::Index i = 0; i < wid.size(); ++i) {
        d_nodes[static_cast<std::size_t>(i)].m += wid(i) * d_in.m;
        // d loss / d identity_share, then the 2-way softmax jacobian
        S dw = (d_in.m.array() * cache.nodes[static_cast<std::size_t>(i)].m.array()).sum();
        S grad = wid(i) * (S(1) - wid(i)) * dw;
        edges_[k].g(i, 0) += grad;
        edges_[k].g(i, 1) -= grad;
      }
    }
    for (std::size_t f = 0; f < nf; ++f) adapters_[f].backward(prepared[f], d_nodes[f]);
  }

  Genotype discretize() const {
    Genotype g;
    g.space = space_;
    for (std::size_t k = 0; k < cells_.size(); ++k) {
      std::vector<double> wid;
      for (Eigen::Index i = 0; i < edges_[k].w.rows(); ++i)
        wid.push_back(double(identity_weight(edges_[k].w(i, 0), edges_[k].w(i, 1))));
      GenotypeCell cell;
      auto [a, b] = derive_cell_inputs(wid);
      cell.input_a = a;
      cell.input_b = b;
      for (const auto& step : cells_[k].steps) cell.steps.push_back(derive_step(step));
      g.cells.push_back(std::move(cell));
    }
    validate_genotype(g);
    return g;
  }

  std::vector<Param<S>*> weight_params() {
    std::vector<Param<S>*> out;
    for (auto& a : adapters_) {
      out.push_back(&a.w);
      out.push_back(&a.b);
    }
    for (auto& c : cells_) c.collect_weights(out);
    head_.collect(out);
    return out;
  }

  std::vector<Param<S>*> arch_params() {
    std::vector<Param<S>*> out;
    for (auto& e : edges_) out.push_back(&e);
    for (auto& c : cells_) c.collect_arch(out);
    return out;
  }

  const SearchSpaceConfig& space() const { return space_; }
  TaskMode mode() const { return mode_; }
  std::vector<Param<S>>& edges() { return edges_; }
  std::vector<CellArch<S>>& cells() { return cells_; }
  std::vector<Adapter<S>>& adapters() { return adapters_; }
  TaskHead<S>& head() { return head_; }

 private:
  SearchSpaceConfig space_;
  std::vector<int> raw_channels_;
  TaskMode mode_;
  std::vector<Adapter<S>> adapters_;
  std::vector<Param<S>> edges_;  // per cell: n_predecessors x 2 logits
  std::vector<CellArch<S>> cells_;
  TaskHead<S> head_;
};

// --- derived discrete network ----------------------------------------------

template <typename S>
struct DiscreteNetCache {
  std::vector<std::optional<TensorNcl<S>>> nodes;
  std::vector<DiscreteCellCache<S>> cells;
  typename TaskHead<S>::Cache head;
};

// The evaluation network for one genotype.  Only cells reachable from the
// last cell and features they consume are instantiated; everything else is
// dead wiring the derivation left behind.
template <typename S>
class DiscreteNet {
 public:
  DiscreteNet(const Genotype& g, std::vector<int> raw_channels, int n_classes, TaskMode mode,
              S dropout, std::uint64_t seed, CellOutputMode out_mode = CellOutputMode::SumSteps)
      : genotype_(g), raw_channels_(std::move(raw_channels)), mode_(mode), out_mode_(out_mode) {
    validate_genotype(genotype_);
    const int nf = genotype_.space.n_features();
    require(static_cast<int>(raw_channels_.size()) == nf,
            "DiscreteNet: one raw channel count per feature required");
    // backward reachability from the last cell
    const int n_cells = genotype_.space.n_cells;
    used_cell_.assign(static_cast<std::size_t>(n_cells), false);
    used_feature_.assign(static_cast<std::size_t>(nf), false);
    std::vector<int> stack = {n_cells - 1};
    used_cell_.back() = true;
    while (!stack.empty()) {
      int k = stack.back();
      stack.pop_back();
      for (int in : {genotype_.cells[static_cast<std::size_t>(k)].input_a,
                     genotype_.cells[static_cast<std::size_t>(k)].input_b}) {
        if (in < nf) {
          used_feature_[static_cast<std::size_t>(in)] = true;
        } else if (!used_cell_[static_cast<std::size_t>(in - nf)]) {
          used_cell_[static_cast<std::size_t>(in - nf)] = true;
          stack.push_back(in - nf);
        }
      }
    }
    Rng rng = make_rng(seed, 2);
    adapters_.resize(static_cast<std::size_t>(nf));
    for (int f = 0; f < nf; ++f)
      if (used_feature_[static_cast<std::size_t>(f)])
        adapters_[static_cast<std::size_t>(f)].init(genotype_.space.channels, raw_channels_[static_cast<std::size_t>(f)], rng);
    cells_.resize(static_cast<std::size_t>(n_cells));
    for (int k = 0; k < n_cells; ++k) {
      if (!used_cell_[static_cast<std::size_t>(k)]) continue;
      const auto& steps = genotype_.cells[static_cast<std::size_t>(k)].steps;
      auto& dst = cells_[static_cast<std::size_t>(k)];
      dst.resize(steps.size());
      for (std::size_t s = 0; s < steps.size(); ++s)
        dst[s].init(steps[s], 2 + static_cast<int>(s), genotype_.space.channels, rng);
    }
    head_.init(genotype_.space.channels, n_classes, dropout, rng);
  }

  MatrixX<S> forward(const std::vector<MatrixX<S>>& prepared, int batch, bool training,
                     Rng* dropout_rng, DiscreteNetCache<S>* cache = nullptr) {
    const int nf = genotype_.space.n_features();
    require(prepared.size() == adapters_.size(),
            "DiscreteNet: prepared feature count does not match genotype");
    std::vector<std::optional<TensorNcl<S>>> nodes(
        static_cast<std::size_t>(nf) + cells_.size());
    for (int f = 0; f < nf; ++f)
      if (used_feature_[static_cast<std::size_t>(f)])
        nodes[static_cast<std::size_t>(f)] = adapters_[static_cast<std::size_t>(f)].forward(
            prepared[static_cast<std::size_t>(f)], batch, genotype_.space.seq_len);
    if (cache) cache->cells.resize(cells_.size());
    for (std::size_t k = 0; k < cells_.size(); ++k) {
      if (!used_cell_[k]) continue;
      const GenotypeCell& gc = genotype_.cells[k];
      const auto& a = nodes[static_cast<std::size_t>(gc.input_a)];
      const auto& b = nodes[static_cast<std::size_t>(gc.input_b)];
      require(a.has_value() && b.has_value(), "DiscreteNet: input node not computed");
      nodes[static_cast<std::size_t>(nf) + k] = cell_forward_discrete(
          *a, *b, cells_[k], cache ? &cache->cells[k] : nullptr, out_mode_);
    }
    MatrixX<S> logits = head_.forward(*nodes.back(), training, dropout_rng,
                                      cache ? &cache->head : nullptr);
    if (cache) cache->nodes = std::move(nodes);
    return logits;
  }

  void backward(const DiscreteNetCache<S>& cache, const std::vector<MatrixX<S>>& prepared,
                const MatrixX<S>& d_logits) {
    const int nf = genotype_.space.n_features();
    std::vector<std::optional<TensorNcl<S>>> d_nodes(cache.nodes.size());
    for (std::size_t i = 0; i < cache.nodes.size(); ++i)
      if (cache.nodes[i]) d_nodes[i] = TensorNcl<S>::zeros_like(*cache.nodes[i]);
    head_.backward(cache.head, d_logits, *d_nodes.back());
    for (std::size_t k = cells_.size(); k-- > 0;) {
      if (!used_cell_[k]) continue;
      const GenotypeCell& gc = genotype_.cells[k];
      cell_backward_discrete(cache.cells[k], cells_[k], *d_nodes[static_cast<std::size_t>(nf) + k],
                             *d_nodes[static_cast<std::size_t>(gc.input_a)],
                             *d_nodes[static_cast<std::size_t>(gc.input_b)], out_mode_);
    }
    for (int f = 0; f < nf; ++f)
      if (used_feature_[static_cast<std::size_t>(f)])
        adapters_[static_cast<std::size_t>(f)].backward(prepared[static_cast<std::size_t>(f)],
                                                        *d_nodes[static_cast<std::size_t>(f)]);
  }

  std::vector<Param<S>*> weight_params() {
    std::vector<Param<S>*> out;
    for (std::size_t f = 0; f < adapters_.size(); ++f)
      if (used_feature_[f]) {
        out.push_back(&adapters_[f].w);
        out.push_back(&adapters_[f].b);
      }
    for (std::size_t k = 0; k < cells_.size(); ++k)
      if (used_cell_[k])
        for (auto& s : cells_[k]) s.collect_weights(out);
    head_.collect(out);
    return out;
  }

  // Trainable parameter count of the instantiated network.
  long param_count() const {
    long total = head_.count();
    for (std::size_t f = 0; f < adapters_.size(); ++f)
      if (used_feature_[f]) total += adapters_[f].count();
    for (std::size_t k = 0; k < cells_.size(); ++k)
      if (used_cell_[k])
        for (const auto& s : cells_[k]) total += s.count();
    return total;
  }

  const Genotype& genotype() const { return genotype_; }
  TaskMode mode() const { return mode_; }
  const std::vector<bool>& used_features() const { return used_feature_; }
  const std::vector<bool>& used_cells() const { return used_cell_; }

 private:
  Genotype genotype_;
  std::vector<int> raw_channels_;
  TaskMode mode_;
  CellOutputMode out_mode_;
  std::vector<bool> used_cell_, used_feature_;
  std::vector<Adapter<S>> adapters_;
  std::vector<std::vector<DiscreteStep<S>>> cells_;
  TaskHead<S> head_;
};

}  // namespace bifuse
