#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bifuse/cell.hpp"

namespace bifuse {

// One searched feature as declared by the task: which modality it came from
// and its index within that modality's extractor stack.
struct FeatureId {
  std::string modality;
  int index = 0;

  bool operator==(const FeatureId&) const = default;
};

// The search space a genotype was derived from.  Serialized alongside the
// architecture so evaluation can refuse a genotype/config mismatch.
struct SearchSpaceConfig {
  int n_cells = 1;
  int steps_per_cell = 1;
  int channels = 8;
  int seq_len = 1;
  std::vector<FeatureId> features;

  bool operator==(const SearchSpaceConfig&) const = default;
  int n_features() const { return static_cast<int>(features.size()); }
  // Global node position of cell k: features come first, then cells in order.
  int cell_position(int k) const { return n_features() + k; }
};

struct GenotypeCell {
  int input_a = 0;  // global node index, input_a < input_b
  int input_b = 1;
  std::vector<StepGene> steps;

  bool operator==(const GenotypeCell&) const = default;
};

// A fully discrete fusion architecture: per cell, the selected input pair
// (upper level) and the selected step wiring and ops (lower level).
struct Genotype {
  SearchSpaceConfig space;
  std::vector<GenotypeCell> cells;

  bool operator==(const Genotype&) const = default;
};

void validate_search_space(const SearchSpaceConfig& space);

// Structural validation; error messages carry the JSON-style field path of
// the offending entry (e.g. "cells[1].steps[0].src_x").
void validate_genotype(const Genotype& g);

// Canonical JSON round-trip.  serialize_genotype always emits the current
// schema_version; deserialize_genotype rejects unknown versions and
// malformed documents with field-path messages, then validates.
std::string serialize_genotype(const Genotype& g);
Genotype deserialize_genotype(const std::string& json_text);

// Stable content digest (hex) of the canonical serialization.
std::string genotype_digest(const Genotype& g);

// Graphviz rendering; step nodes are named C{n}_S{m}.
std::string genotype_to_dot(const Genotype& g);

// Fixed fusion patterns expressible inside one cell.
enum class PatternKind { Sum, ConcatFc, Mha2, Aoa };

// The two readings of the attention-then-gate wiring: the gate operand of
// the LinearGlu step is either the cell's first input or the attention
// output itself.
enum class AoaVariant { GateFromInput, GateFromAttention };

const char* pattern_name(PatternKind k);
PatternKind pattern_from_name(const std::string& s);

// Step fragment implementing the pattern inside a cell whose inputs sit at
// local indices 0 and 1.
std::vector<StepGene> pattern_steps(PatternKind k, AoaVariant v = AoaVariant::GateFromInput);

// Single-cell genotype applying the pattern to one pair of feature nodes.
Genotype make_pattern(PatternKind k, const SearchSpaceConfig& space, int input_a, int input_b,
                      AoaVariant v = AoaVariant::GateFromInput);

}  // namespace bifuse
