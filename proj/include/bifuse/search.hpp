#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bifuse/genotype.hpp"
#include "bifuse/tasks.hpp"

namespace bifuse {

// Knobs for both optimization levels plus the final retraining run.  The
// network weights follow a per-epoch cosine schedule from net_max_lr down
// to net_min_lr; the architecture logits use a fixed rate with L2.
struct TrainConfig {
  int epochs = 20;
  int batch_size = 64;
  double dropout = 0.1;
  double arch_lr = 3e-4;
  double arch_l2 = 1e-3;
  double net_max_lr = 1e-3;
  double net_min_lr = 1e-6;
  double net_l2 = 1e-4;
  int eval_epochs = 30;    // derived-network training on train+val
  int oracle_epochs = 10;  // per-candidate training in exhaustive ranking
  // stop this call after so many epochs while keeping the full-length
  // schedule; 0 means run to `epochs`.  Pair with a checkpoint to split one
  // search across several invocations.
  int stop_after = 0;
  std::uint64_t seed = 0;
};

void validate_train_config(const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_metric = 0.0;
  std::string genotype_digest;
  bool improved = false;
};

struct SearchResult {
  Genotype best_genotype;
  double best_val_metric = 0.0;
  int best_epoch = -1;
  std::vector<EpochRecord> log;
  long weight_steps = 0;
  long arch_steps = 0;
};

// Alternating first-order search: per training batch, one architecture
// update on a validation batch followed by one weight update.  The best
// genotype is tracked by relaxed-network validation metric and only ever
// replaced by a strict improvement.  When checkpoint_path is non-empty the
// state is saved after every epoch and an existing file is resumed from.
SearchResult run_search(const Dataset& ds, const SearchSpaceConfig& space,
                        const TrainConfig& cfg, const std::string& checkpoint_path = "");

struct EvalResult {
  double test_metric = 0.0;
  double test_loss = 0.0;
  long param_count = 0;
  std::string digest;
};

// Final protocol for one genotype: train the discrete network from scratch
// on train+val for cfg.eval_epochs, report the test metric.  Deterministic
// in (genotype, dataset, cfg, seed).
EvalResult evaluate_genotype(const Genotype& g, const Dataset& ds, const TrainConfig& cfg,
                             std::uint64_t seed);

struct ValTestScore {
  double val_metric = 0.0;
  double test_metric = 0.0;
};

// Ranking protocol for one genotype: train on the training split only for
// cfg.oracle_epochs, report validation and test metrics.
ValTestScore train_and_score(const Genotype& g, const Dataset& ds, const TrainConfig& cfg,
                             std::uint64_t seed);

// --- reference architectures --------------------------------------------------

// Same inner wiring as `searched`, but every cell's input pair is redrawn
// uniformly at random from that cell's predecessors.
Genotype make_random_selection(const Genotype& searched, std::uint64_t seed);

// Classic late fusion expressed in the genotype format: the last feature of
// each modality is combined by a chain of concat+FC cells.
Genotype make_late_fusion(const SearchSpaceConfig& space);

// Keeps the cell input pairs of `base` but replaces every cell's steps with
// the given fixed fusion pattern, padded with zero-op steps.
Genotype apply_pattern_steps(const Genotype& base, PatternKind kind,
                             AoaVariant variant = AoaVariant::GateFromInput);

// --- ablation ------------------------------------------------------------------

struct AblationRow {
  std::string name;
  std::vector<double> scores;  // test metric per seed
  double mean = 0.0;
  double stddev = 0.0;
};

// Runs the full search once per seed (cfg.seed + s), then scores the
// searched genotype and each requested reference against it with the
// evaluation protocol.  Known names: searched, random_selection,
// late_fusion, sum, concat_fc, mha2, aoa.
std::vector<AblationRow> run_ablation(const Dataset& ds, const SearchSpaceConfig& space,
                                      const TrainConfig& cfg,
                                      const std::vector<std::string>& names, int n_seeds);

}  // namespace bifuse
