#include "bifuse/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <set>

#include <yaml-cpp/yaml.h>

namespace bifuse {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::invalid_argument("config: " + path + ": " + what);
}

void check_keys(const YAML::Node& node, const std::string& path,
                const std::set<std::string>& allowed) {
  if (!node.IsMap()) fail(path, "expected a mapping");
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    if (allowed.find(key) == allowed.end()) fail(path + "." + key, "unknown key");
  }
}

template <typename T>
T get_scalar(const YAML::Node& node, const std::string& path, T fallback) {
  if (!node.IsDefined() || node.IsNull()) return fallback;
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    fail(path, "cannot parse value");
  }
}

template <typename T>
T get_required(const YAML::Node& node, const std::string& path) {
  if (!node.IsDefined() || node.IsNull()) fail(path, "missing required value");
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    fail(path, "cannot parse value");
  }
}

std::vector<FeatureDecl> parse_features(const YAML::Node& node, const std::string& path) {
  if (!node.IsSequence()) fail(path, "expected a list");
  std::vector<FeatureDecl> out;
  for (std::size_t i = 0; i < node.size(); ++i) {
    const YAML::Node& jf = node[i];
    const std::string p = path + "[" + std::to_string(i) + "]";
    check_keys(jf, p, {"modality", "index", "dims", "roles"});
    FeatureDecl d;
    d.id.modality = get_required<std::string>(jf["modality"], p + ".modality");
    d.id.index = get_required<int>(jf["index"], p + ".index");
    const YAML::Node& dims = jf["dims"];
    const YAML::Node& roles = jf["roles"];
    if (!dims.IsSequence()) fail(p + ".dims", "expected a list of integers");
    if (!roles.IsSequence()) fail(p + ".roles", "expected a list of axis roles");
    if (dims.size() != roles.size()) fail(p, "dims and roles must have equal length");
    for (std::size_t a = 0; a < dims.size(); ++a) {
      d.sample_dims.push_back(
          get_required<Eigen::Index>(dims[a], p + ".dims[" + std::to_string(a) + "]"));
      try {
        d.sample_roles.push_back(axis_role_from_name(
            get_required<std::string>(roles[a], p + ".roles[" + std::to_string(a) + "]")));
      } catch (const std::invalid_argument&) {
        fail(p + ".roles[" + std::to_string(a) + "]",
             "expected one of channel, temporal, spatial");
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace

RunConfig load_run_config(const std::string& yaml_path) {
  YAML::Node doc;
  try {
    doc = YAML::LoadFile(yaml_path);
  } catch (const YAML::BadFile&) {
    throw std::runtime_error("config: cannot read file: " + yaml_path);
  } catch (const YAML::Exception& e) {
    throw std::invalid_argument("config: " + yaml_path + " is not valid YAML: " + e.what());
  }
  check_keys(doc, "$", {"seed", "output_dir", "search_space", "task", "training"});

  RunConfig cfg;
  cfg.seed = get_scalar<std::uint64_t>(doc["seed"], "seed", 0);
  cfg.output_dir = get_scalar<std::string>(doc["output_dir"], "output_dir", cfg.output_dir);

  const YAML::Node& space = doc["search_space"];
  if (space.IsDefined()) {
    check_keys(space, "search_space", {"channels", "seq_len", "cells", "steps_per_cell"});
    cfg.space.channels = get_scalar<int>(space["channels"], "search_space.channels", 8);
    cfg.space.seq_len = get_scalar<int>(space["seq_len"], "search_space.seq_len", 2);
    cfg.space.n_cells = get_scalar<int>(space["cells"], "search_space.cells", 2);
    cfg.space.steps_per_cell =
        get_scalar<int>(space["steps_per_cell"], "search_space.steps_per_cell", 1);
  }
  require(cfg.space.channels >= 1, "config: search_space.channels: must be >= 1");
  require(cfg.space.seq_len >= 1, "config: search_space.seq_len: must be >= 1");
  require(cfg.space.n_cells >= 1, "config: search_space.cells: must be >= 1");
  require(cfg.space.steps_per_cell >= 1, "config: search_space.steps_per_cell: must be >= 1");

  const YAML::Node& task = doc["task"];
  cfg.planted = default_planted_spec(cfg.seed);
  if (task.IsDefined()) {
    check_keys(task, "task",
               {"kind", "manifest", "mode", "n_classes", "noise", "train", "val", "test",
                "planted_pair", "planted_op", "features", "label_channels", "label_seq_len"});
    cfg.task_kind = get_scalar<std::string>(task["kind"], "task.kind", "planted");
    if (cfg.task_kind == "manifest") {
      cfg.manifest_path = get_required<std::string>(task["manifest"], "task.manifest");
    } else if (cfg.task_kind == "planted") {
      PlantedTaskSpec& p = cfg.planted;
      if (task["features"].IsDefined())
        p.features = parse_features(task["features"], "task.features");
      const std::string mode =
          get_scalar<std::string>(task["mode"], "task.mode", task_mode_name(p.mode));
      try {
        p.mode = task_mode_from_name(mode);
      } catch (const std::invalid_argument&) {
        fail("task.mode", "expected multiclass or multilabel");
      }
      p.n_classes = get_scalar<int>(task["n_classes"], "task.n_classes", p.n_classes);
      p.label_noise = get_scalar<double>(task["noise"], "task.noise", p.label_noise);
      p.n_train = get_scalar<int>(task["train"], "task.train", p.n_train);
      p.n_val = get_scalar<int>(task["val"], "task.val", p.n_val);
      p.n_test = get_scalar<int>(task["test"], "task.test", p.n_test);
      p.label_channels =
          get_scalar<int>(task["label_channels"], "task.label_channels", p.label_channels);
      p.label_seq_len =
          get_scalar<int>(task["label_seq_len"], "task.label_seq_len", p.label_seq_len);
      if (task["planted_pair"].IsDefined()) {
        const YAML::Node& pair = task["planted_pair"];
        if (!pair.IsSequence() || pair.size() != 2)
          fail("task.planted_pair", "expected a list of two feature indices");
        p.planted_a = get_required<int>(pair[0], "task.planted_pair[0]");
        p.planted_b = get_required<int>(pair[1], "task.planted_pair[1]");
      }
      if (task["planted_op"].IsDefined()) {
        try {
          p.planted_op =
              op_from_name(get_required<std::string>(task["planted_op"], "task.planted_op"));
        } catch (const std::invalid_argument&) {
          fail("task.planted_op", "unknown op name");
        }
      }
      p.seed = cfg.seed;
      validate_planted_spec(p);
    } else {
      fail("task.kind", "expected planted or manifest");
    }
  }

  const YAML::Node& training = doc["training"];
  if (training.IsDefined()) {
    check_keys(training, "training",
               {"epochs", "batch_size", "dropout", "arch_lr", "arch_l2", "net_max_lr",
                "net_min_lr", "net_l2", "eval_epochs", "oracle_epochs", "stop_after"});
    TrainConfig& t = cfg.training;
    t.epochs = get_scalar<int>(training["epochs"], "training.epochs", t.epochs);
    t.batch_size = get_scalar<int>(training["batch_size"], "training.batch_size", t.batch_size);
    t.dropout = get_scalar<double>(training["dropout"], "training.dropout", t.dropout);
    t.arch_lr = get_scalar<double>(training["arch_lr"], "training.arch_lr", t.arch_lr);
    t.arch_l2 = get_scalar<double>(training["arch_l2"], "training.arch_l2", t.arch_l2);
    t.net_max_lr = get_scalar<double>(training["net_max_lr"], "training.net_max_lr", t.net_max_lr);
    t.net_min_lr = get_scalar<double>(training["net_min_lr"], "training.net_min_lr", t.net_min_lr);
    t.net_l2 = get_scalar<double>(training["net_l2"], "training.net_l2", t.net_l2);
    t.eval_epochs = get_scalar<int>(training["eval_epochs"], "training.eval_epochs", t.eval_epochs);
    t.oracle_epochs =
        get_scalar<int>(training["oracle_epochs"], "training.oracle_epochs", t.oracle_epochs);
    t.stop_after = get_scalar<int>(training["stop_after"], "training.stop_after", t.stop_after);
  }
  cfg.training.seed = cfg.seed;
  validate_train_config(cfg.training);
  return cfg;
}

Dataset load_task(RunConfig& cfg) {
  Dataset ds;
  if (cfg.task_kind == "manifest") {
    ds = load_external(cfg.manifest_path);
  } else {
    cfg.planted.seed = cfg.seed;
    ds = generate_planted(cfg.planted);
  }
  cfg.space.features = ds.feature_ids();
  validate_search_space(cfg.space);
  return ds;
}

std::string resolve_output_dir(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  const char* root = std::getenv("BIFUSE_OUT_ROOT");
  fs::path dir(cfg.output_dir);
  if (root != nullptr && *root != '\0' && dir.is_relative()) dir = fs::path(root) / dir;
  return dir.string();
}

}  // namespace bifuse
