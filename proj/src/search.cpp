#include "bifuse/search.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "bifuse/hypernet.hpp"
#include "bifuse/metrics.hpp"
#include "bifuse/optimizer.hpp"

namespace bifuse {

void validate_train_config(const TrainConfig& cfg) {
  require(cfg.epochs >= 1, "training.epochs: must be >= 1");
  require(cfg.batch_size >= 1, "training.batch_size: must be >= 1");
  require(cfg.dropout >= 0.0 && cfg.dropout < 1.0, "training.dropout: must lie in [0, 1)");
  require(cfg.arch_lr > 0.0, "training.arch_lr: must be > 0");
  require(cfg.arch_l2 >= 0.0, "training.arch_l2: must be >= 0");
  require(cfg.net_max_lr > 0.0, "training.net_max_lr: must be > 0");
  require(cfg.net_min_lr >= 0.0 && cfg.net_min_lr <= cfg.net_max_lr,
          "training.net_min_lr: must lie in [0, net_max_lr]");
  require(cfg.net_l2 >= 0.0, "training.net_l2: must be >= 0");
  require(cfg.eval_epochs >= 1, "training.eval_epochs: must be >= 1");
  require(cfg.oracle_epochs >= 1, "training.oracle_epochs: must be >= 1");
  require(cfg.stop_after >= 0, "training.stop_after: must be >= 0");
}

namespace {

double batch_loss(TaskMode mode, const MatrixX<double>& logits, const PreparedSplit& batch,
                  MatrixX<double>* d_logits) {
  if (mode == TaskMode::Multiclass)
    return multiclass_cross_entropy(logits, batch.labels, d_logits);
  return multilabel_bce(logits, batch.label_bits, d_logits);
}

double batch_metric(TaskMode mode, const MatrixX<double>& logits, const PreparedSplit& batch) {
  if (mode == TaskMode::Multiclass) return accuracy(logits, batch.labels);
  return weighted_f1_multilabel(logits, batch.label_bits);
}

std::vector<int> shuffled_indices(int n, Rng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

// Whole-split forward in batch_size chunks; returns loss and metric.
template <typename Net>
std::pair<double, double> score_split(Net& net, const PreparedSplit& split, int target_l,
                                      int batch_size, TaskMode mode) {
  double loss_sum = 0.0;
  MatrixX<double> logits;
  for (int at = 0; at < split.size; at += batch_size) {
    const int n = std::min(batch_size, split.size - at);
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), at);
    PreparedSplit batch = gather_batch(split, idx, target_l);
    MatrixX<double> out = net.forward(batch.features, n, /*training=*/false, nullptr);
    if (logits.size() == 0) logits.resize(out.rows(), split.size);
    logits.middleCols(at, n) = out;
    loss_sum += batch_loss(mode, out, batch, nullptr) * n;
  }
  return {loss_sum / split.size, batch_metric(mode, logits, split)};
}

// --- checkpoint io ------------------------------------------------------------

constexpr char kCheckpointMagic[4] = {'B', 'F', 'C', '1'};

void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
}
template <typename T>
void put_pod(std::ostream& os, const T& v) {
  put_bytes(os, &v, sizeof v);
}
void put_string(std::ostream& os, const std::string& s) {
  put_pod<std::uint64_t>(os, s.size());
  put_bytes(os, s.data(), s.size());
}
void put_matrix(std::ostream& os, const MatrixX<double>& m) {
  put_pod<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
  put_pod<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
  put_bytes(os, m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
}

void get_bytes(std::istream& is, void* p, std::size_t n, const std::string& path) {
  is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("checkpoint: truncated file: " + path);
}
template <typename T>
T get_pod(std::istream& is, const std::string& path) {
  T v{};
  get_bytes(is, &v, sizeof v, path);
  return v;
}
std::string get_string(std::istream& is, const std::string& path) {
  std::uint64_t n = get_pod<std::uint64_t>(is, path);
  if (n > (1ull << 30)) throw std::runtime_error("checkpoint: corrupt string length: " + path);
  std::string s(n, '\0');
  get_bytes(is, s.data(), n, path);
  return s;
}
void get_matrix(std::istream& is, MatrixX<double>& m, const std::string& path) {
  const auto rows = get_pod<std::uint64_t>(is, path);
  const auto cols = get_pod<std::uint64_t>(is, path);
  if (rows != static_cast<std::uint64_t>(m.rows()) ||
      cols != static_cast<std::uint64_t>(m.cols()))
    throw std::runtime_error("checkpoint: array shape mismatch (was the config changed?): " +
                             path);
  get_bytes(is, m.data(), static_cast<std::size_t>(m.size()) * sizeof(double), path);
}

struct SearchState {
  Hypernet<double>* net = nullptr;
  AdamOptimizer<double>* wopt = nullptr;
  AdamOptimizer<double>* aopt = nullptr;
  SearchResult* result = nullptr;
  Rng* loop_rng = nullptr;
  int next_epoch = 0;
};

void save_checkpoint(const std::string& path, const TrainConfig& cfg, SearchState& st) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot write: " + tmp);
    put_bytes(os, kCheckpointMagic, 4);
    put_pod<std::uint64_t>(os, cfg.seed);
    put_pod<std::int32_t>(os, st.next_epoch);
    put_pod<std::int64_t>(os, st.result->weight_steps);
    put_pod<std::int64_t>(os, st.result->arch_steps);
    put_pod<double>(os, st.result->best_val_metric);
    put_pod<std::int32_t>(os, st.result->best_epoch);
    put_string(os, st.result->best_epoch >= 0 ? serialize_genotype(st.result->best_genotype)
                                              : std::string());
    put_pod<std::uint64_t>(os, st.result->log.size());
    for (const EpochRecord& r : st.result->log) {
      put_pod<std::int32_t>(os, r.epoch);
      put_pod<double>(os, r.train_loss);
      put_pod<double>(os, r.val_loss);
      put_pod<double>(os, r.val_metric);
      put_string(os, r.genotype_digest);
      put_pod<std::uint8_t>(os, r.improved ? 1 : 0);
    }
    std::vector<Param<double>*> params = st.net->weight_params();
    for (Param<double>* p : st.net->arch_params()) params.push_back(p);
    for (Param<double>* p : params) put_matrix(os, p->w);
    for (AdamOptimizer<double>* opt : {st.wopt, st.aopt}) {
      put_pod<std::int64_t>(os, opt->step_count());
      for (const auto& m : opt->moments1()) put_matrix(os, m);
      for (const auto& m : opt->moments2()) put_matrix(os, m);
    }
    std::ostringstream rng_text;
    rng_text << *st.loop_rng;
    put_string(os, rng_text.str());
    if (!os) throw std::runtime_error("checkpoint: short write: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void load_checkpoint(const std::string& path, const TrainConfig& cfg, SearchState& st) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot read: " + path);
  char magic[4];
  get_bytes(is, magic, 4, path);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic: " + path);
  if (get_pod<std::uint64_t>(is, path) != cfg.seed)
    throw std::runtime_error("checkpoint: seed does not match the run config: " + path);
  st.next_epoch = get_pod<std::int32_t>(is, path);
  st.result->weight_steps = get_pod<std::int64_t>(is, path);
  st.result->arch_steps = get_pod<std::int64_t>(is, path);
  st.result->best_val_metric = get_pod<double>(is, path);
  st.result->best_epoch = get_pod<std::int32_t>(is, path);
  const std::string best = get_string(is, path);
  if (!best.empty()) st.result->best_genotype = deserialize_genotype(best);
  const auto n_log = get_pod<std::uint64_t>(is, path);
  if (n_log > (1ull << 24)) throw std::runtime_error("checkpoint: corrupt log length: " + path);
  st.result->log.clear();
  for (std::uint64_t i = 0; i < n_log; ++i) {
    EpochRecord r;
    r.epoch = get_pod<std::int32_t>(is, path);
    r.train_loss = get_pod<double>(is, path);
    r.val_loss = get_pod<double>(is, path);
    r.val_metric = get_pod<double>(is, path);
    r.genotype_digest = get_string(is, path);
    r.improved = get_pod<std::uint8_t>(is, path) != 0;
    st.result->log.push_back(std::move(r));
  }
  std::vector<Param<double>*> params = st.net->weight_params();
  for (Param<double>* p : st.net->arch_params()) params.push_back(p);
  for (Param<double>* p : params) get_matrix(is, p->w, path);
  for (AdamOptimizer<double>* opt : {st.wopt, st.aopt}) {
    opt->step_count_ref() = get_pod<std::int64_t>(is, path);
    for (auto& m : opt->moments1()) get_matrix(is, m, path);
    for (auto& m : opt->moments2()) get_matrix(is, m, path);
  }
  std::istringstream rng_text(get_string(is, path));
  rng_text >> *st.loop_rng;
  if (!rng_text) throw std::runtime_error("checkpoint: corrupt rng state: " + path);
}

}  // namespace

SearchResult run_search(const Dataset& ds, const SearchSpaceConfig& space,
                        const TrainConfig& cfg, const std::string& checkpoint_path) {
  validate_train_config(cfg);
  validate_search_space(space);
  require(ds.train.size >= 1 && ds.val.size >= 1, "run_search: empty train or val split");
  require(static_cast<int>(ds.features.size()) == space.n_features(),
          "run_search: dataset feature count does not match the search space");

  const int target_l = space.seq_len;
  PreparedSplit train = prepare_split(ds.train, target_l);
  PreparedSplit val = prepare_split(ds.val, target_l);

  Hypernet<double> net(space, ds.raw_channels(), ds.n_classes, ds.mode, cfg.dropout, cfg.seed);
  AdamOptimizer<double> wopt(net.weight_params(), cfg.net_max_lr, cfg.net_l2);
  AdamOptimizer<double> aopt(net.arch_params(), cfg.arch_lr, cfg.arch_l2);
  Rng loop_rng = make_rng(cfg.seed, 5);

  SearchResult result;
  SearchState st{&net, &wopt, &aopt, &result, &loop_rng, 0};
  if (!checkpoint_path.empty() && std::filesystem::exists(checkpoint_path))
    load_checkpoint(checkpoint_path, cfg, st);

  std::vector<Param<double>*> all_params = net.weight_params();
  for (Param<double>* p : net.arch_params()) all_params.push_back(p);

  int epochs_this_call = 0;
  for (int epoch = st.next_epoch; epoch < cfg.epochs; ++epoch) {
    wopt.set_lr(cosine_lr(cfg.net_max_lr, cfg.net_min_lr, epoch, cfg.epochs));
    std::vector<int> train_order = shuffled_indices(train.size, loop_rng);
    std::vector<int> val_order = shuffled_indices(val.size, loop_rng);
    std::size_t val_cursor = 0;
    double train_loss_sum = 0.0;

    for (int at = 0; at < train.size; at += cfg.batch_size) {
      const int n = std::min(cfg.batch_size, train.size - at);

      // architecture step on a validation batch
      std::vector<int> vidx(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        vidx[static_cast<std::size_t>(i)] =
            val_order[val_cursor % val_order.size()];
        ++val_cursor;
      }
      PreparedSplit vbatch = gather_batch(val, vidx, target_l);
      {
        HypernetCache<double> cache;
        MatrixX<double> logits =
            net.forward(vbatch.features, n, /*training=*/true, &loop_rng, &cache);
        MatrixX<double> d_logits;
        double loss = batch_loss(ds.mode, logits, vbatch, &d_logits);
        if (!std::isfinite(loss))
          throw std::runtime_error("run_search: non-finite validation loss at epoch " +
                                   std::to_string(epoch));
        zero_grads(all_params);
        net.backward(cache, vbatch.features, d_logits);
        aopt.step();
        ++result.arch_steps;
      }

      // weight step on the training batch
      std::vector<int> tidx(train_order.begin() + at, train_order.begin() + at + n);
      PreparedSplit tbatch = gather_batch(train, tidx, target_l);
      {
        HypernetCache<double> cache;
        MatrixX<double> logits =
            net.forward(tbatch.features, n, /*training=*/true, &loop_rng, &cache);
        MatrixX<double> d_logits;
        double loss = batch_loss(ds.mode, logits, tbatch, &d_logits);
        if (!std::isfinite(loss))
          throw std::runtime_error("run_search: non-finite training loss at epoch " +
                                   std::to_string(epoch));
        zero_grads(all_params);
        net.backward(cache, tbatch.features, d_logits);
        wopt.step();
        ++result.weight_steps;
        train_loss_sum += loss * n;
      }
    }

    auto [val_loss, val_metric] = score_split(net, val, target_l, cfg.batch_size, ds.mode);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_loss_sum / train.size;
    rec.val_loss = val_loss;
    rec.val_metric = val_metric;
    Genotype g = net.discretize();
    rec.genotype_digest = genotype_digest(g);
    rec.improved = result.best_epoch < 0 || val_metric > result.best_val_metric;
    if (rec.improved) {
      result.best_genotype = g;
      result.best_val_metric = val_metric;
      result.best_epoch = epoch;
    }
    result.log.push_back(std::move(rec));

    if (!checkpoint_path.empty()) {
      st.next_epoch = epoch + 1;
      save_checkpoint(checkpoint_path, cfg, st);
    }
    if (cfg.stop_after > 0 && ++epochs_this_call >= cfg.stop_after) break;
  }
  require(result.best_epoch >= 0, "run_search: no epochs were run");
  return result;
}

namespace {

// Shared retraining loop for discrete networks: cosine schedule over
// `epochs`, shuffled minibatches, Adam with L2.
void train_discrete(DiscreteNet<double>& net, const PreparedSplit& train, int target_l,
                    const TrainConfig& cfg, int epochs, Rng& rng) {
  AdamOptimizer<double> opt(net.weight_params(), cfg.net_max_lr, cfg.net_l2);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    opt.set_lr(cosine_lr(cfg.net_max_lr, cfg.net_min_lr, epoch, epochs));
    std::vector<int> order = shuffled_indices(train.size, rng);
    for (int at = 0; at < train.size; at += cfg.batch_size) {
      const int n = std::min(cfg.batch_size, train.size - at);
      std::vector<int> idx(order.begin() + at, order.begin() + at + n);
      PreparedSplit batch = gather_batch(train, idx, target_l);
      DiscreteNetCache<double> cache;
      MatrixX<double> logits = net.forward(batch.features, n, /*training=*/true, &rng, &cache);
      MatrixX<double> d_logits;
      double loss = batch_loss(net.mode(), logits, batch, &d_logits);
      if (!std::isfinite(loss))
        throw std::runtime_error("train_discrete: non-finite loss at epoch " +
                                 std::to_string(epoch));
      zero_grads(net.weight_params());
      net.backward(cache, batch.features, d_logits);
      opt.step();
    }
  }
}

}  // namespace

EvalResult evaluate_genotype(const Genotype& g, const Dataset& ds, const TrainConfig& cfg,
                             std::uint64_t seed) {
  validate_train_config(cfg);
  const int target_l = g.space.seq_len;
  PreparedSplit trainval = concat_splits(prepare_split(ds.train, target_l),
                                         prepare_split(ds.val, target_l), target_l);
  PreparedSplit test = prepare_split(ds.test, target_l);

  DiscreteNet<double> net(g, ds.raw_channels(), ds.n_classes, ds.mode, cfg.dropout, seed);
  Rng rng = make_rng(seed, 6);
  train_discrete(net, trainval, target_l, cfg, cfg.eval_epochs, rng);

  EvalResult out;
  auto [loss, metric] = score_split(net, test, target_l, cfg.batch_size, ds.mode);
  out.test_loss = loss;
  out.test_metric = metric;
  out.param_count = net.param_count();
  out.digest = genotype_digest(g);
  return out;
}

ValTestScore train_and_score(const Genotype& g, const Dataset& ds, const TrainConfig& cfg,
                             std::uint64_t seed) {
  validate_train_config(cfg);
  const int target_l = g.space.seq_len;
  PreparedSplit train = prepare_split(ds.train, target_l);
  PreparedSplit val = prepare_split(ds.val, target_l);
  PreparedSplit test = prepare_split(ds.test, target_l);

  DiscreteNet<double> net(g, ds.raw_channels(), ds.n_classes, ds.mode, cfg.dropout, seed);
  Rng rng = make_rng(seed, 6);
  train_discrete(net, train, target_l, cfg, cfg.oracle_epochs, rng);

  ValTestScore out;
  out.val_metric = score_split(net, val, target_l, cfg.batch_size, ds.mode).second;
  out.test_metric = score_split(net, test, target_l, cfg.batch_size, ds.mode).second;
  return out;
}

// --- reference architectures --------------------------------------------------

Genotype make_random_selection(const Genotype& searched, std::uint64_t seed) {
  validate_genotype(searched);
  Genotype g = searched;
  Rng rng = make_rng(seed, 7);
  for (int k = 0; k < g.space.n_cells; ++k) {
    const int n_preds = g.space.cell_position(k);
    std::uniform_int_distribution<int> da(0, n_preds - 1);
    int a = da(rng);
    std::uniform_int_distribution<int> db(0, n_preds - 2);
    int b = db(rng);
    if (b >= a) ++b;
    g.cells[static_cast<std::size_t>(k)].input_a = std::min(a, b);
    g.cells[static_cast<std::size_t>(k)].input_b = std::max(a, b);
  }
  validate_genotype(g);
  return g;
}

Genotype make_late_fusion(const SearchSpaceConfig& space) {
  validate_search_space(space);
  // last feature of each modality, in order of first appearance
  std::vector<std::string> seen;
  std::vector<int> last;
  for (int f = 0; f < space.n_features(); ++f) {
    const std::string& m = space.features[static_cast<std::size_t>(f)].modality;
    auto it = std::find(seen.begin(), seen.end(), m);
    if (it == seen.end()) {
      seen.push_back(m);
      last.push_back(f);
    } else {
      last[static_cast<std::size_t>(it - seen.begin())] = f;
    }
  }
  if (last.size() < 2) {
    require(space.n_features() >= 2, "make_late_fusion: at least two features required");
    last = {0, space.n_features() - 1};
  }

  Genotype g;
  g.space = space;
  const int nf = space.n_features();
  for (int k = 0; k < space.n_cells; ++k) {
    GenotypeCell cell;
    if (k == 0) {
      cell.input_a = std::min(last[0], last[1]);
      cell.input_b = std::max(last[0], last[1]);
    } else {
      // chain the previous cell with the next modality, cycling
      cell.input_a = last[static_cast<std::size_t>((k + 1) % static_cast<int>(last.size()))];
      cell.input_b = nf + k - 1;
    }
    for (int s = 0; s < space.steps_per_cell; ++s)
      cell.steps.push_back({0, 1, OpKind::ConcatFc});
    g.cells.push_back(std::move(cell));
  }
  validate_genotype(g);
  return g;
}

Genotype apply_pattern_steps(const Genotype& base, PatternKind kind, AoaVariant variant) {
  validate_genotype(base);
  std::vector<StepGene> fragment = pattern_steps(kind, variant);
  require(static_cast<int>(fragment.size()) <= base.space.steps_per_cell,
          "apply_pattern_steps: pattern needs more steps per cell than the space allows");
  Genotype g = base;
  for (GenotypeCell& cell : g.cells) {
    cell.steps = fragment;
    while (static_cast<int>(cell.steps.size()) < g.space.steps_per_cell)
      cell.steps.push_back({0, 0, OpKind::Zero});
  }
  validate_genotype(g);
  return g;
}

// --- ablation ------------------------------------------------------------------

std::vector<AblationRow> run_ablation(const Dataset& ds, const SearchSpaceConfig& space,
                                      const TrainConfig& cfg,
                                      const std::vector<std::string>& names, int n_seeds) {
  require(n_seeds >= 1, "run_ablation: n_seeds must be >= 1");
  require(!names.empty(), "run_ablation: no reference names given");
  std::vector<AblationRow> rows;
  rows.reserve(names.size());
  for (const std::string& name : names) rows.push_back({name, {}, 0.0, 0.0});

  for (int s = 0; s < n_seeds; ++s) {
    TrainConfig scfg = cfg;
    scfg.seed = cfg.seed + static_cast<std::uint64_t>(s);
    Genotype searched = run_search(ds, space, scfg).best_genotype;
    for (std::size_t r = 0; r < names.size(); ++r) {
      Genotype g;
      const std::string& name = names[r];
      if (name == "searched") {
        g = searched;
      } else if (name == "random_selection") {
        g = make_random_selection(searched, scfg.seed);
      } else if (name == "late_fusion") {
        g = make_late_fusion(space);
      } else if (name == "sum") {
        g = apply_pattern_steps(searched, PatternKind::Sum);
      } else if (name == "concat_fc") {
        g = apply_pattern_steps(searched, PatternKind::ConcatFc);
      } else if (name == "mha2") {
        g = apply_pattern_steps(searched, PatternKind::Mha2);
      } else if (name == "aoa") {
        g = apply_pattern_steps(searched, PatternKind::Aoa);
      } else {
        throw std::invalid_argument("run_ablation: unknown reference name \"" + name + "\"");
      }
      rows[r].scores.push_back(evaluate_genotype(g, ds, scfg, scfg.seed).test_metric);
    }
  }
  for (AblationRow& row : rows) {
    const double n = static_cast<double>(row.scores.size());
    row.mean = std::accumulate(row.scores.begin(), row.scores.end(), 0.0) / n;
    double var = 0.0;
    for (double v : row.scores) var += (v - row.mean) * (v - row.mean);
    row.stddev = std::sqrt(var / n);
  }
  return rows;
}

}  // namespace bifuse
