// Acceptance gate: every shipped guarantee checked end to end, one
// [PASS]/[FAIL] line per criterion.  Unlike the unit suites this binary
// favors integration-level checks: real search runs, real datasets, the
// exhaustive oracle, and the independently written reference math from
// oracles.hpp.  Exit status is the number of failed criteria (capped).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bifuse/hypernet.hpp"
#include "bifuse/metrics.hpp"
#include "bifuse/optimizer.hpp"
#include "bifuse/oracle.hpp"
#include "bifuse/search.hpp"
#include "bifuse/tasks.hpp"
#include "oracles.hpp"

using namespace bifuse;

namespace {

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

TensorNcl<double> random_tensor(int n, int c, int l, std::uint64_t seed) {
  Rng rng = make_rng(seed, 40);
  std::normal_distribution<double> d(0.0, 1.0);
  TensorNcl<double> t(n, c, l);
  for (Eigen::Index j = 0; j < t.m.cols(); ++j)
    for (Eigen::Index i = 0; i < t.m.rows(); ++i) t.m(i, j) = d(rng);
  return t;
}

std::vector<MatrixX<double>> random_prepared(const std::vector<int>& raw, int batch, int l,
                                             std::uint64_t seed) {
  Rng rng = make_rng(seed, 41);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<MatrixX<double>> out;
  for (int c : raw) {
    MatrixX<double> m(c, batch * l);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = d(rng);
    out.push_back(std::move(m));
  }
  return out;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

// ---------------------------------------------------------------------------
// criterion 1: each fixed fusion pattern, instantiated as a genotype and run
// through the discrete cell, matches the independently written reference
// with tied parameters.

bool criterion1(std::string& detail) {
  const int n = 4, c = 8, l = 4;
  SearchSpaceConfig space;
  space.n_cells = 1;
  space.steps_per_cell = 2;  // two-step patterns fit; shorter ones get zero padding
  space.channels = c;
  space.seq_len = l;
  space.features = {{"a", 0}, {"b", 0}};

  TensorNcl<double> x = random_tensor(n, c, l, 101);
  TensorNcl<double> y = random_tensor(n, c, l, 102);
  Rng prng = make_rng(9, 3);

  double worst = 0.0;
  for (PatternKind kind :
       {PatternKind::Sum, PatternKind::ConcatFc, PatternKind::Mha2, PatternKind::Aoa}) {
    Genotype g = make_pattern(kind, space, 0, 1);
    std::vector<DiscreteStep<double>> steps;
    for (std::size_t s = 0; s < g.cells[0].steps.size(); ++s) {
      DiscreteStep<double> st;
      st.init(g.cells[0].steps[s], 2 + static_cast<int>(s), c, prng);
      steps.push_back(std::move(st));
    }
    TensorNcl<double> got =
        cell_forward_discrete<double>(x, y, steps, nullptr, CellOutputMode::SumSteps);
    TensorNcl<double> want;
    switch (kind) {
      case PatternKind::Sum: want = refs::sum_ref(x, y); break;
      case PatternKind::ConcatFc:
        want = refs::concat_fc_ref(x, y, steps[0].cfc.w.w, steps[0].cfc.b.w.col(0));
        break;
      case PatternKind::Mha2: want = refs::mha2_ref(x, y); break;
      case PatternKind::Aoa:
        want = refs::attention_on_attention_ref(x, y, steps[1].glu.value_w.w,
                                                steps[1].glu.gate_w.w);
        break;
    }
    worst = std::max(worst, refs::linf(got, want));
  }
  detail = "max Linf " + std::to_string(worst);
  return worst < 1e-5;
}

// ---------------------------------------------------------------------------
// criterion 2: analytic gradients of the relaxed network match central
// finite differences for every architecture logit and every parameter
// family on a 2-cell / 2-step space.

bool criterion2(std::string& detail) {
  SearchSpaceConfig space;
  space.n_cells = 2;
  space.steps_per_cell = 2;
  space.channels = 4;
  space.seq_len = 2;
  space.features = {{"img", 0}, {"txt", 0}};
  const std::vector<int> raw = {3, 5};
  const int batch = 3;

  Hypernet<double> net(space, raw, 3, TaskMode::Multiclass, 0.0, 17, 0.8);
  auto prepared = random_prepared(raw, batch, space.seq_len, 202);
  Eigen::VectorXi labels(batch);
  labels << 0, 2, 1;

  std::vector<Param<double>*> params = net.weight_params();
  for (Param<double>* p : net.arch_params()) params.push_back(p);
  zero_grads(params);
  HypernetCache<double> cache;
  MatrixX<double> logits = net.forward(prepared, batch, false, nullptr, &cache);
  MatrixX<double> d_logits;
  multiclass_cross_entropy<double>(logits, labels, &d_logits);
  net.backward(cache, prepared, d_logits);

  refs::FdChecker fd{[&]() {
    return double(
        multiclass_cross_entropy<double>(net.forward(prepared, batch, false, nullptr), labels));
  }};
  for (Param<double>* p : params) fd.check(p->w, p->g);
  detail = "max relative error " + std::to_string(fd.max_rel_err) + " over " +
           std::to_string(params.size()) + " parameter blocks";
  return fd.max_rel_err < 1e-4;
}

// ---------------------------------------------------------------------------
// criterion 3: pushing every argmax logit up concentrates the relaxation
// onto its derived discrete program.  Checked at the two places the
// relaxation lives: the cell body (slot + op softmaxes) and the input edges
// (identity/zero mixtures).  The gap must shrink monotonically over the
// shift ladder and vanish below 1e-5 at +20.

bool criterion3(std::string& detail) {
  const double shifts[] = {0.0, 5.0, 10.0, 20.0};

  // cell body: relaxed cell vs the discrete twin of its own derivation
  const int c = 4, l = 2, n = 3;
  Rng arng = make_rng(33, 1);
  CellArch<double> arch;
  arch.init(2, c, arng, 0.9);
  TensorNcl<double> x = random_tensor(n, c, l, 301);
  TensorNcl<double> y = random_tensor(n, c, l, 302);

  std::vector<DiscreteStep<double>> twin;
  for (std::size_t i = 0; i < arch.steps.size(); ++i) {
    DiscreteStep<double> st;
    st.gene = derive_step(arch.steps[i]);
    st.glu = arch.steps[i].glu;
    st.cfc = arch.steps[i].cfc;
    twin.push_back(std::move(st));
  }
  TensorNcl<double> hard =
      cell_forward_discrete<double>(x, y, twin, nullptr, CellOutputMode::SumSteps);

  std::vector<double> cell_gap;
  for (double s : shifts) {
    CellArch<double> shifted = arch;
    for (auto& st : shifted.steps) {
      st.slot_x_logits.w(argmax_lowest<double>(st.slot_x_logits.w.col(0)), 0) += s;
      st.slot_y_logits.w(argmax_lowest<double>(st.slot_y_logits.w.col(0)), 0) += s;
      st.op_logits.w(argmax_lowest<double>(st.op_logits.w.col(0)), 0) += s;
    }
    TensorNcl<double> soft =
        cell_forward_relaxed<double>(x, y, shifted, nullptr, CellOutputMode::SumSteps);
    cell_gap.push_back(refs::linf(soft, hard));
  }

  // input edges: identity/zero mixture over candidate nodes vs the hard
  // selection of every identity-argmax edge
  const int n_nodes = 5;
  std::vector<TensorNcl<double>> nodes;
  for (int i = 0; i < n_nodes; ++i) nodes.push_back(random_tensor(n, c, l, 310 + i));
  Param<double> edges;
  edges.resize(n_nodes, 2);
  edges.init_logit_noise(arng, 0.9);

  TensorNcl<double> picked = TensorNcl<double>::zeros_like(nodes[0]);
  for (int i = 0; i < n_nodes; ++i)
    if (edges.w(i, 0) >= edges.w(i, 1)) picked.m += nodes[static_cast<std::size_t>(i)].m;

  std::vector<double> edge_gap;
  for (double s : shifts) {
    TensorNcl<double> mixed = TensorNcl<double>::zeros_like(nodes[0]);
    for (int i = 0; i < n_nodes; ++i) {
      VectorX<double> row = edges.w.row(i).transpose();
      row(edges.w(i, 0) >= edges.w(i, 1) ? 0 : 1) += s;
      mixed.m += mixed_edge(row, nodes[static_cast<std::size_t>(i)]).m;
    }
    edge_gap.push_back(refs::linf(mixed, picked));
  }

  bool mono = true;
  for (std::size_t i = 1; i < 4; ++i) {
    if (cell_gap[i] > cell_gap[i - 1] + 1e-12) mono = false;
    if (edge_gap[i] > edge_gap[i - 1] + 1e-12) mono = false;
  }
  detail = "cell gap at +20 " + std::to_string(cell_gap[3]) + ", edge gap at +20 " +
           std::to_string(edge_gap[3]);
  return mono && cell_gap[3] < 1e-5 && edge_gap[3] < 1e-5;
}

// ---------------------------------------------------------------------------
// criterion 4: closed-form sizes of the selection spaces.

long choose2(long n) { return n * (n - 1) / 2; }

long closed_form_count(const SearchSpaceConfig& s) {
  long total = 1;
  for (int k = 0; k < s.n_cells; ++k) {
    total *= choose2(s.n_features() + k);
    for (int i = 0; i < s.steps_per_cell; ++i) total *= long(2 + i) * (2 + i) * kNumOpKinds;
  }
  return total;
}

SearchSpaceConfig toy_space(int n_cells, int steps, int n_features) {
  SearchSpaceConfig s;
  s.n_cells = n_cells;
  s.steps_per_cell = steps;
  s.channels = 8;
  s.seq_len = 2;
  for (int f = 0; f < n_features; ++f) s.features.push_back({"m", f});
  return s;
}

bool criterion4(std::string& detail) {
  bool ok = count_candidate_pairs(8, PairScheme::CellByCell) == 16 &&
            count_candidate_pairs(8, PairScheme::Pairwise) == 28;

  const SearchSpaceConfig spaces[] = {toy_space(1, 1, 4), toy_space(1, 2, 2), toy_space(2, 1, 2)};
  std::string sizes;
  for (const auto& s : spaces) {
    const long want = closed_form_count(s);
    const long counted = count_genotypes(s);
    const long listed = static_cast<long>(enumerate_genotypes(s, 10000).size());
    ok = ok && counted == want && listed == want;
    sizes += (sizes.empty() ? "" : "/") + std::to_string(listed);
  }
  detail = "pair counts 16/28, space sizes " + sizes;
  return ok;
}

// ---------------------------------------------------------------------------
// criteria 5 and 9 share one batch of search runs on the default planted
// task (five seeds, one cell, one step).

struct PlantedRuns {
  Dataset ds;
  SearchSpaceConfig space;
  TrainConfig cfg;
  std::vector<Genotype> searched;
  std::vector<double> searched_scores;
  std::vector<double> random_scores;
  int pair_hits = 0;
};

TrainConfig planted_train_config() {
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 64;
  // Dropout and architecture weight decay are disabled for these runs: on
  // desk-scale tasks both act as pure noise on the op-selection gradients,
  // pushing the derived op toward an arbitrary argmax.
  cfg.dropout = 0.0;
  cfg.arch_lr = 1e-2;
  cfg.arch_l2 = 0.0;
  cfg.net_max_lr = 3e-3;
  cfg.net_min_lr = 1e-4;
  cfg.net_l2 = 1e-4;
  cfg.eval_epochs = 30;
  cfg.oracle_epochs = 10;
  return cfg;
}

std::optional<PlantedRuns> g_planted;

const PlantedRuns& planted_runs() {
  if (!g_planted) {
    PlantedRuns r;
    r.ds = generate_planted(default_planted_spec(900));
    r.space.n_cells = 1;
    r.space.steps_per_cell = 1;
    r.space.channels = 8;
    r.space.seq_len = 2;
    r.space.features = r.ds.feature_ids();
    r.cfg = planted_train_config();
    for (int s = 0; s < 5; ++s) {
      TrainConfig cfg = r.cfg;
      cfg.seed = 100 + static_cast<std::uint64_t>(s);
      SearchResult res = run_search(r.ds, r.space, cfg);
      const GenotypeCell& cell = res.best_genotype.cells[0];
      if (cell.input_a == r.ds.spec.planted_a && cell.input_b == r.ds.spec.planted_b)
        ++r.pair_hits;
      Genotype rnd = make_random_selection(res.best_genotype, 300 + static_cast<std::uint64_t>(s));
      r.searched_scores.push_back(
          evaluate_genotype(res.best_genotype, r.ds, r.cfg, 500 + static_cast<std::uint64_t>(s))
              .test_metric);
      r.random_scores.push_back(
          evaluate_genotype(rnd, r.ds, r.cfg, 500 + static_cast<std::uint64_t>(s)).test_metric);
      r.searched.push_back(std::move(res.best_genotype));
    }
    g_planted = std::move(r);
  }
  return *g_planted;
}

bool criterion5(std::string& detail) {
  const double t0 = now_s();
  const PlantedRuns& r = planted_runs();
  const double searched = mean(r.searched_scores);
  const double random = mean(r.random_scores);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "planted pair %d/5 seeds, searched %.3f vs random %.3f (%.0fs)", r.pair_hits,
                searched, random, now_s() - t0);
  detail = buf;
  return r.pair_hits >= 4 && searched >= random + 0.05;
}

// ---------------------------------------------------------------------------
// criterion 6: on a fully enumerable space, the search lands in the top 20%
// of the exhaustive ranking.

bool criterion6(std::string& detail) {
  const double t0 = now_s();
  PlantedTaskSpec spec;
  spec.features = default_feature_decls(2, 2);
  spec.mode = TaskMode::Multiclass;
  spec.n_classes = 3;
  spec.n_train = 480;
  spec.n_val = 240;
  spec.n_test = 240;
  spec.label_noise = 0.05;
  spec.planted_a = 0;
  spec.planted_b = 3;
  spec.planted_op = OpKind::ConcatFc;
  spec.seed = 600;
  Dataset ds = generate_planted(spec);

  SearchSpaceConfig space;
  space.n_cells = 1;
  space.steps_per_cell = 1;
  space.channels = 8;
  space.seq_len = 2;
  space.features = ds.feature_ids();
  const long total = count_genotypes(space);
  if (total > 120) {
    detail = "space unexpectedly large: " + std::to_string(total);
    return false;
  }

  TrainConfig cfg = planted_train_config();
  cfg.batch_size = 32;
  cfg.seed = 1234;
  std::vector<RankedGenotype> ranking = brute_force_rank(ds, space, cfg, cfg.seed);
  const long cutoff = static_cast<long>(double(ranking.size()) * 0.2);  // top 20%

  int hits = 0;
  long worst_pos = -1;
  for (int s = 0; s < 5; ++s) {
    TrainConfig scfg = planted_train_config();
    scfg.batch_size = 32;
    scfg.seed = 700 + static_cast<std::uint64_t>(s);
    SearchResult res = run_search(ds, space, scfg);
    const long pos = ranking_position(ranking, genotype_digest(res.best_genotype));
    if (pos >= 0 && pos < cutoff) ++hits;
    worst_pos = std::max(worst_pos, pos);
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "top-%ld of %zu in %d/5 seeds, worst rank %ld (%.0fs)", cutoff,
                ranking.size(), hits, worst_pos, now_s() - t0);
  detail = buf;
  return hits >= 4;
}

// ---------------------------------------------------------------------------
// criterion 7: ablation direction on a planted task — searched selection
// beats late fusion beats random selection, and the searched strategy beats
// every fixed pattern other than the planted one.

bool criterion7(std::string& detail) {
  const double t0 = now_s();
  // Late fusion hard-wires the last feature of each modality, so this task
  // plants a pair that shares exactly one feature with that wiring: late
  // fusion keeps partial signal (staying above random selection) while only
  // the searched pair keeps all of it.
  PlantedTaskSpec spec = default_planted_spec(900);
  spec.planted_b = 4;
  Dataset ds = generate_planted(spec);
  SearchSpaceConfig space;
  space.n_cells = 1;
  space.steps_per_cell = 1;
  space.channels = 8;
  space.seq_len = 2;
  space.features = ds.feature_ids();
  const TrainConfig cfg = planted_train_config();

  Genotype late = make_late_fusion(space);
  SearchSpaceConfig two_step = space;
  two_step.steps_per_cell = 2;  // roomy enough for every fixed pattern

  std::vector<double> searched_scores, late_scores, random_scores;
  std::vector<double> pattern_scores[3];
  const PatternKind kinds[] = {PatternKind::Sum, PatternKind::Mha2, PatternKind::Aoa};
  for (int s = 0; s < 5; ++s) {
    TrainConfig scfg = cfg;
    scfg.seed = 100 + static_cast<std::uint64_t>(s);
    SearchResult res = run_search(ds, space, scfg);
    const std::uint64_t eval_seed = 500 + static_cast<std::uint64_t>(s);
    searched_scores.push_back(evaluate_genotype(res.best_genotype, ds, cfg, eval_seed).test_metric);
    late_scores.push_back(evaluate_genotype(late, ds, cfg, eval_seed).test_metric);
    Genotype rnd = make_random_selection(res.best_genotype, 300 + static_cast<std::uint64_t>(s));
    random_scores.push_back(evaluate_genotype(rnd, ds, cfg, eval_seed).test_metric);
    const GenotypeCell& cell = res.best_genotype.cells[0];
    for (int k = 0; k < 3; ++k) {
      Genotype g = make_pattern(kinds[k], two_step, cell.input_a, cell.input_b);
      pattern_scores[k].push_back(evaluate_genotype(g, ds, cfg, eval_seed).test_metric);
    }
  }

  const double searched = mean(searched_scores);
  const double late_m = mean(late_scores);
  const double random_m = mean(random_scores);
  bool ok = searched >= late_m && late_m >= random_m;
  std::string worst_pattern;
  double worst_gap = 1.0;
  const char* names[] = {"sum", "mha2", "aoa"};
  for (int k = 0; k < 3; ++k) {
    const double pm = mean(pattern_scores[k]);
    if (searched - pm < worst_gap) {
      worst_gap = searched - pm;
      worst_pattern = names[k];
    }
    ok = ok && searched >= pm;
  }
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "searched %.3f >= late %.3f >= random %.3f; closest pattern %s at %+.3f (%.0fs)",
                searched, late_m, random_m, worst_pattern.c_str(), -worst_gap, now_s() - t0);
  detail = buf;
  return ok;
}

// ---------------------------------------------------------------------------
// criterion 8: property suite, at least 100 random cases per invariant.

bool criterion8(std::string& detail) {
  const double t0 = now_s();
  Rng rng = make_rng(8080, 0);
  std::normal_distribution<double> nd(0.0, 3.0);

  // raising the zero logit never raises the identity share
  for (int i = 0; i < 100; ++i) {
    const double id = nd(rng), zero = nd(rng);
    const double delta = std::abs(nd(rng)) + 1e-3;
    if (identity_weight(id, zero + delta) > identity_weight(id, zero) + 1e-15) {
      detail = "identity share rose with the zero logit";
      return false;
    }
  }

  // shifting every edge logit of a cell by one constant leaves the derived
  // input pair unchanged
  for (int i = 0; i < 100; ++i) {
    std::uniform_int_distribution<int> nn(2, 8);
    const int n = nn(rng);
    std::vector<double> base, shifted;
    const double c = nd(rng) * 3.0;
    for (int j = 0; j < n; ++j) {
      const double id = nd(rng), zero = nd(rng);
      base.push_back(identity_weight(id, zero));
      shifted.push_back(identity_weight(id + c, zero + c));
    }
    if (derive_cell_inputs(base) != derive_cell_inputs(shifted)) {
      detail = "derived pair changed under a constant logit shift";
      return false;
    }
  }

  // serialization round-trips exactly
  for (int i = 0; i < 100; ++i) {
    SearchSpaceConfig s;
    std::uniform_int_distribution<int> cells(1, 3), steps(1, 3), feats(2, 5), dim(1, 16);
    s.n_cells = cells(rng);
    s.steps_per_cell = steps(rng);
    s.channels = dim(rng);
    s.seq_len = dim(rng);
    const int nf = feats(rng);
    for (int f = 0; f < nf; ++f) s.features.push_back({f % 2 == 0 ? "a" : "b", f / 2});
    Genotype g;
    g.space = s;
    for (int k = 0; k < s.n_cells; ++k) {
      GenotypeCell cell;
      const int preds = s.cell_position(k);
      std::uniform_int_distribution<int> da(0, preds - 1);
      int a = da(rng);
      std::uniform_int_distribution<int> db(0, preds - 2);
      int b = db(rng);
      if (b >= a) ++b;
      cell.input_a = std::min(a, b);
      cell.input_b = std::max(a, b);
      for (int st = 0; st < s.steps_per_cell; ++st) {
        std::uniform_int_distribution<int> src(0, 2 + st - 1), op(0, kNumOpKinds - 1);
        cell.steps.push_back({src(rng), src(rng), static_cast<OpKind>(op(rng))});
      }
      g.cells.push_back(std::move(cell));
    }
    Genotype back = deserialize_genotype(serialize_genotype(g));
    if (!(back == g) || genotype_digest(back) != genotype_digest(g)) {
      detail = "genotype round-trip mismatch";
      return false;
    }
  }

  // equal seeds give bitwise-equal search trajectories
  {
    PlantedTaskSpec spec;
    spec.features = default_feature_decls(1, 2);
    spec.n_classes = 2;
    spec.n_train = 48;
    spec.n_val = 24;
    spec.n_test = 24;
    spec.label_noise = 0.0;
    spec.planted_a = 0;
    spec.planted_b = 1;
    spec.planted_op = OpKind::Sum;
    spec.seed = 77;
    Dataset micro = generate_planted(spec);
    SearchSpaceConfig space;
    space.n_cells = 1;
    space.steps_per_cell = 1;
    space.channels = 4;
    space.seq_len = 2;
    space.features = micro.feature_ids();
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 24;
    cfg.dropout = 0.3;
    for (int i = 0; i < 100; ++i) {
      cfg.seed = 1000 + static_cast<std::uint64_t>(i);
      SearchResult a = run_search(micro, space, cfg);
      SearchResult b = run_search(micro, space, cfg);
      bool same = genotype_digest(a.best_genotype) == genotype_digest(b.best_genotype) &&
                  a.best_val_metric == b.best_val_metric && a.log.size() == b.log.size();
      for (std::size_t e = 0; same && e < a.log.size(); ++e)
        same = a.log[e].genotype_digest == b.log[e].genotype_digest &&
               a.log[e].train_loss == b.log[e].train_loss;
      if (!same) {
        detail = "equal seeds diverged in run " + std::to_string(i);
        return false;
      }
    }
  }

  // attention outputs stay inside the convex hull of the value columns
  for (int i = 0; i < 100; ++i) {
    const int n = 2, c = 3, l = 3;
    TensorNcl<double> x = random_tensor(n, c, l, 5000 + static_cast<std::uint64_t>(i));
    TensorNcl<double> y = random_tensor(n, c, l, 6000 + static_cast<std::uint64_t>(i));
    TensorNcl<double> out = op_forward<double>(OpKind::Attention, x, y, nullptr, nullptr);
    for (int s = 0; s < n; ++s) {
      refs::Mat cols(c, l);
      for (int j = 0; j < l; ++j)
        for (int ch = 0; ch < c; ++ch) cols(ch, j) = refs::at(y, s, ch, j);
      for (int j = 0; j < l; ++j) {
        refs::Vec v(c);
        for (int ch = 0; ch < c; ++ch) v(ch) = refs::at(out, s, ch, j);
        if (!refs::in_convex_hull(cols, v)) {
          detail = "attention output escaped the value hull";
          return false;
        }
      }
    }
  }

  char buf[96];
  std::snprintf(buf, sizeof(buf), "5 invariants x 100 cases (%.0fs)", now_s() - t0);
  detail = buf;
  return true;
}

// ---------------------------------------------------------------------------
// criterion 9: the reported parameter count equals the analytic formula, and
// a zero op strictly undercuts a parameterized one.

long analytic_count(const Genotype& g, const std::vector<int>& raw, int n_classes) {
  const int nf = g.space.n_features();
  const long c = g.space.channels;
  std::vector<bool> used_cell(g.cells.size(), false), used_feature(nf, false);
  std::vector<int> stack = {static_cast<int>(g.cells.size()) - 1};
  used_cell.back() = true;
  while (!stack.empty()) {
    const int k = stack.back();
    stack.pop_back();
    for (int in : {g.cells[static_cast<std::size_t>(k)].input_a,
                   g.cells[static_cast<std::size_t>(k)].input_b}) {
      if (in < nf) {
        used_feature[static_cast<std::size_t>(in)] = true;
      } else if (!used_cell[static_cast<std::size_t>(in - nf)]) {
        used_cell[static_cast<std::size_t>(in - nf)] = true;
        stack.push_back(in - nf);
      }
    }
  }
  long total = 0;
  for (int f = 0; f < nf; ++f)
    if (used_feature[static_cast<std::size_t>(f)])
      total += c * raw[static_cast<std::size_t>(f)] + c;
  for (std::size_t k = 0; k < g.cells.size(); ++k) {
    if (!used_cell[k]) continue;
    for (const StepGene& s : g.cells[k].steps) {
      if (s.op == OpKind::LinearGlu) total += 2 * c * c;
      if (s.op == OpKind::ConcatFc) total += 2 * c * c + c;
    }
  }
  total += long(n_classes) * c + n_classes;
  return total;
}

bool criterion9(std::string& detail) {
  PlantedTaskSpec spec = default_planted_spec(900);
  SearchSpaceConfig space;
  space.n_cells = 2;
  space.steps_per_cell = 2;
  space.channels = 8;
  space.seq_len = 2;
  for (const FeatureDecl& f : spec.features) space.features.push_back(f.id);
  std::vector<int> raw;
  for (const FeatureDecl& f : spec.features) raw.push_back(f.channel_count());
  const int n_classes = 4;

  Genotype g;
  g.space = space;
  g.cells.push_back({2, 5,
                     {{0, 1, OpKind::LinearGlu}, {2, 1, OpKind::ConcatFc}}});
  g.cells.push_back({0, 6, {{0, 1, OpKind::Attention}, {1, 2, OpKind::Sum}}});
  validate_genotype(g);

  bool ok = true;
  std::vector<Genotype> cases = {g};
  {
    Genotype skip = g;  // last cell ignores the first one -> its params drop out
    skip.cells[1].input_a = 0;
    skip.cells[1].input_b = 1;
    cases.push_back(skip);
  }
  for (const Genotype& gi : cases) {
    DiscreteNet<double> net(gi, raw, n_classes, TaskMode::Multiclass, 0.0, 3);
    if (net.param_count() != analytic_count(gi, raw, n_classes)) ok = false;
  }

  // the evaluation path reports the same number
  const PlantedRuns& r = planted_runs();
  Genotype searched = r.searched[0];
  std::vector<int> planted_raw;
  for (const FeatureDecl& f : r.ds.features) planted_raw.push_back(f.channel_count());
  TrainConfig quick = r.cfg;
  quick.eval_epochs = 1;
  const long reported = evaluate_genotype(searched, r.ds, quick, 1).param_count;
  const long formula = analytic_count(searched, planted_raw, r.ds.n_classes);
  ok = ok && reported == formula;

  // a zero step strictly undercuts a concat+fc step
  Genotype zi = g, cf = g;
  zi.cells[1].steps[1].op = OpKind::Zero;
  cf.cells[1].steps[1].op = OpKind::ConcatFc;
  DiscreteNet<double> znet(zi, raw, n_classes, TaskMode::Multiclass, 0.0, 3);
  DiscreteNet<double> cnet(cf, raw, n_classes, TaskMode::Multiclass, 0.0, 3);
  const long zero_count = znet.param_count();
  const long cfc_count = cnet.param_count();
  ok = ok && zero_count < cfc_count &&
       cfc_count - zero_count == 2L * space.channels * space.channels + space.channels;

  detail = "eval reports " + std::to_string(reported) + " = formula " + std::to_string(formula) +
           "; zero step saves " + std::to_string(cfc_count - zero_count);
  return ok;
}

}  // namespace

int main() {
  struct Entry {
    int id;
    const char* name;
    std::function<bool(std::string&)> fn;
  };
  const Entry entries[] = {
      {1, "fixed patterns match reference modules", criterion1},
      {2, "analytic gradients match finite differences", criterion2},
      {3, "concentrated relaxation converges to its discrete program", criterion3},
      {4, "selection-space counting matches closed forms", criterion4},
      {5, "search recovers the planted structure", criterion5},
      {6, "search agrees with the exhaustive oracle", criterion6},
      {7, "searched architecture dominates the reference baselines", criterion7},
      {8, "randomized invariant suite", criterion8},
      {9, "parameter accounting matches the analytic formula", criterion9},
  };

  int failures = 0;
  for (const Entry& e : entries) {
    bool ok = false;
    std::string detail;
    try {
      ok = e.fn(detail);
    } catch (const std::exception& ex) {
      ok = false;
      detail = std::string("exception: ") + ex.what();
    }
    std::printf("[%s] criterion %d: %s%s%s\n", ok ? "PASS" : "FAIL", e.id, e.name,
                detail.empty() ? "" : " — ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures > 0 ? 1 : 0;
}
