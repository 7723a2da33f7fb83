#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bifuse/genotype.hpp"
#include "bifuse/search.hpp"

namespace bifuse {

// Number of distinct genotypes in the space, saturating at LONG_MAX: the
// product over cells of input-pair choices times, per step, squared source
// choices times the op pool size.
long count_genotypes(const SearchSpaceConfig& space);

// Every genotype of the space in a fixed lexicographic order (cell pairs
// first, then per-step sources and ops, later cells fastest).  Refuses
// spaces larger than `cap` so a typo cannot trigger an exponential walk.
std::vector<Genotype> enumerate_genotypes(const SearchSpaceConfig& space, long cap = 10000);

struct RankedGenotype {
  Genotype genotype;
  std::string digest;
  double val_metric = 0.0;
  double test_metric = 0.0;
};

// Ground-truth ranking for small spaces: trains every genotype with the
// ranking protocol (train split only, cfg.oracle_epochs) and sorts by
// validation metric, best first, ties broken by digest.
std::vector<RankedGenotype> brute_force_rank(const Dataset& ds, const SearchSpaceConfig& space,
                                             const TrainConfig& cfg, std::uint64_t seed,
                                             long cap = 10000);

// rank,digest,val_metric,test_metric rows.
void write_ranking_csv(const std::vector<RankedGenotype>& ranking, const std::string& path);

// Position of `digest` in the ranking (0 = best); -1 when absent.
long ranking_position(const std::vector<RankedGenotype>& ranking, const std::string& digest);

}  // namespace bifuse
