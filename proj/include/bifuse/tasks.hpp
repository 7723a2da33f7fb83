#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bifuse/feature_adapter.hpp"
#include "bifuse/genotype.hpp"
#include "bifuse/hypernet.hpp"

namespace bifuse {

// Declares one feature stream: identity plus the per-sample array layout
// (the batch axis is implicit and always leads).
struct FeatureDecl {
  FeatureId id;
  std::vector<Eigen::Index> sample_dims;
  std::vector<AxisRole> sample_roles;

  int channel_count() const {
    for (std::size_t a = 0; a < sample_roles.size(); ++a)
      if (sample_roles[a] == AxisRole::Channel) return static_cast<int>(sample_dims[a]);
    throw std::invalid_argument("FeatureDecl: no channel axis declared");
  }
};

// Synthetic task with a planted dependency: labels are a fixed function of
// exactly one feature pair routed through one fusion primitive; every other
// feature is independent noise.
struct PlantedTaskSpec {
  std::vector<FeatureDecl> features;
  TaskMode mode = TaskMode::Multiclass;
  int n_classes = 2;
  int n_train = 2000, n_val = 500, n_test = 500;
  double label_noise = 0.05;
  int planted_a = 0, planted_b = 1;  // global feature indices, a != b
  OpKind planted_op = OpKind::ConcatFc;
  std::uint64_t seed = 0;
  // internal width of the label pipeline (reference adapters map into this)
  int label_channels = 8;
  int label_seq_len = 2;
};

// Desk-scale default: two modalities x three features each, mixed vector
// and temporal shapes, planted ConcatFc on the last feature of each
// modality.
PlantedTaskSpec default_planted_spec(std::uint64_t seed);

// Shape declarations for n_modalities x per_modality features: channel
// width alternates 8/16 by modality, even-indexed features are plain
// vectors and odd-indexed ones carry a length-4 temporal axis.
std::vector<FeatureDecl> default_feature_decls(int n_modalities, int per_modality);

struct Split {
  std::vector<RawFeature<double>> features;  // one batched array per feature
  Eigen::VectorXi labels;                    // multiclass targets
  MatrixX<double> label_bits;                // multilabel targets (classes x n)
  int size = 0;
};

struct Dataset {
  std::vector<FeatureDecl> features;
  TaskMode mode = TaskMode::Multiclass;
  int n_classes = 2;
  Split train, val, test;
  PlantedTaskSpec spec;  // populated for generated datasets

  std::vector<int> raw_channels() const {
    std::vector<int> out;
    out.reserve(features.size());
    for (const auto& f : features) out.push_back(f.channel_count());
    return out;
  }
  std::vector<FeatureId> feature_ids() const {
    std::vector<FeatureId> out;
    out.reserve(features.size());
    for (const auto& f : features) out.push_back(f.id);
    return out;
  }
};

void validate_planted_spec(const PlantedTaskSpec& spec);

Dataset generate_planted(const PlantedTaskSpec& spec);

// Noise-free labels recomputed from the task's planted label pipeline —
// the hard-wired reference model for a generated split.
Eigen::VectorXi oracle_labels(const PlantedTaskSpec& spec, const Split& split);
MatrixX<double> oracle_label_bits(const PlantedTaskSpec& spec, const Split& split);

// --- external datasets -------------------------------------------------------

// Writes a manifest plus one flat binary array file per (sample, feature)
// under dir.  Returns the manifest path.
std::string export_dataset(const Dataset& ds, const std::string& dir);

// Loads a dataset from a manifest written by export_dataset (or by an
// upstream tool following the same format).  Missing files, shape
// disagreements, and checksum mismatches are rejected with the offending
// path in the message.
Dataset load_external(const std::string& manifest_path);

// --- training-ready views ----------------------------------------------------

// A split with every feature pooled and interpolated to the fusion length:
// feature f becomes raw_channels[f] x (n * target_l).  This front half of
// the adapter pipeline is deterministic, so it is computed once.
struct PreparedSplit {
  std::vector<MatrixX<double>> features;
  Eigen::VectorXi labels;
  MatrixX<double> label_bits;
  int size = 0;
};

PreparedSplit prepare_split(const Split& split, int target_l);

// Row-gather of a batch by sample indices.
PreparedSplit gather_batch(const PreparedSplit& prepared, const std::vector<int>& idx,
                           int target_l);

// Concatenation of two prepared splits (e.g. train + val for final
// training).
PreparedSplit concat_splits(const PreparedSplit& a, const PreparedSplit& b, int target_l);

}  // namespace bifuse
