#include "bifuse/oracle.hpp"

#include <algorithm>
#include <fstream>
#include <limits>

namespace bifuse {

namespace {

long saturating_mul(long a, long b) {
  if (a == 0 || b == 0) return 0;
  if (a > std::numeric_limits<long>::max() / b) return std::numeric_limits<long>::max();
  return a * b;
}

}  // namespace

long count_genotypes(const SearchSpaceConfig& space) {
  validate_search_space(space);
  long total = 1;
  for (int k = 0; k < space.n_cells; ++k) {
    const long p = space.cell_position(k);
    total = saturating_mul(total, p * (p - 1) / 2);
    for (int i = 0; i < space.steps_per_cell; ++i) {
      const long sources = 2 + i;
      total = saturating_mul(total, sources * sources * kNumOpKinds);
    }
  }
  return total;
}

std::vector<Genotype> enumerate_genotypes(const SearchSpaceConfig& space, long cap) {
  const long total = count_genotypes(space);
  require(total <= cap, "enumerate_genotypes: space holds " + std::to_string(total) +
                            " genotypes, above the cap of " + std::to_string(cap));

  // mixed-radix odometer over choice slots, later slots fastest
  struct Slot {
    int cell;
    int step;  // -1 for the cell's input pair
    int radix;
  };
  std::vector<Slot> slots;
  std::vector<std::vector<std::pair<int, int>>> pairs(
      static_cast<std::size_t>(space.n_cells));
  for (int k = 0; k < space.n_cells; ++k) {
    for (int a = 0; a < space.cell_position(k); ++a)
      for (int b = a + 1; b < space.cell_position(k); ++b)
        pairs[static_cast<std::size_t>(k)].push_back({a, b});
    slots.push_back({k, -1, static_cast<int>(pairs[static_cast<std::size_t>(k)].size())});
    for (int i = 0; i < space.steps_per_cell; ++i)
      slots.push_back({k, i, (2 + i) * (2 + i) * kNumOpKinds});
  }

  std::vector<int> digit(slots.size(), 0);
  std::vector<Genotype> out;
  out.reserve(static_cast<std::size_t>(total));
  for (;;) {
    Genotype g;
    g.space = space;
    g.cells.resize(static_cast<std::size_t>(space.n_cells));
    for (std::size_t s = 0; s < slots.size(); ++s) {
      GenotypeCell& cell = g.cells[static_cast<std::size_t>(slots[s].cell)];
      if (slots[s].step < 0) {
        auto [a, b] = pairs[static_cast<std::size_t>(slots[s].cell)]
                           [static_cast<std::size_t>(digit[s])];
        cell.input_a = a;
        cell.input_b = b;
      } else {
        const int sources = 2 + slots[s].step;
        int v = digit[s];
        const OpKind op = static_cast<OpKind>(v % kNumOpKinds);
        v /= kNumOpKinds;
        cell.steps.push_back({v / sources, v % sources, op});
      }
    }
    out.push_back(std::move(g));

    // increment, last slot fastest
    std::size_t s = slots.size();
    while (s > 0) {
      --s;
      if (++digit[s] < slots[s].radix) break;
      digit[s] = 0;
      if (s == 0) {
        require(static_cast<long>(out.size()) == total,
                "enumerate_genotypes: internal enumeration mismatch");
        return out;
      }
    }
  }
}

std::vector<RankedGenotype> brute_force_rank(const Dataset& ds, const SearchSpaceConfig& space,
                                             const TrainConfig& cfg, std::uint64_t seed,
                                             long cap) {
  std::vector<Genotype> all = enumerate_genotypes(space, cap);
  std::vector<RankedGenotype> ranking;
  ranking.reserve(all.size());
  for (Genotype& g : all) {
    RankedGenotype r;
    r.digest = genotype_digest(g);
    ValTestScore score = train_and_score(g, ds, cfg, seed);
    r.val_metric = score.val_metric;
    r.test_metric = score.test_metric;
    r.genotype = std::move(g);
    ranking.push_back(std::move(r));
  }
  std::sort(ranking.begin(), ranking.end(), [](const RankedGenotype& a, const RankedGenotype& b) {
    if (a.val_metric != b.val_metric) return a.val_metric > b.val_metric;
    return a.digest < b.digest;
  });
  return ranking;
}

void write_ranking_csv(const std::vector<RankedGenotype>& ranking, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_ranking_csv: cannot write: " + path);
  os << "rank,digest,val_metric,test_metric\n";
  for (std::size_t i = 0; i < ranking.size(); ++i)
    os << i << "," << ranking[i].digest << "," << ranking[i].val_metric << ","
       << ranking[i].test_metric << "\n";
  if (!os) throw std::runtime_error("write_ranking_csv: short write: " + path);
}

long ranking_position(const std::vector<RankedGenotype>& ranking, const std::string& digest) {
  for (std::size_t i = 0; i < ranking.size(); ++i)
    if (ranking[i].digest == digest) return static_cast<long>(i);
  return -1;
}

}  // namespace bifuse
