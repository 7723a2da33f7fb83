// Command-line frontend: search, eval, ablate, viz.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "bifuse/config.hpp"
#include "bifuse/oracle.hpp"
#include "bifuse/search.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read file: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  os << text;
  if (!os) throw std::runtime_error("cannot write file: " + path);
}

// Best-effort validation-curve plot; plotting problems must never sink a
// finished search, so the caller wraps this in a try block.
std::string curve_svg(const std::vector<bifuse::EpochRecord>& log) {
  const int w = 640, h = 360, pad = 40;
  double lo = 1e300, hi = -1e300;
  for (const auto& r : log) {
    lo = std::min(lo, r.val_metric);
    hi = std::max(hi, r.val_metric);
  }
  if (!(hi > lo)) hi = lo + 1.0;
  std::ostringstream ss;
  ss << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<polyline fill=\"none\" "
        "stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < log.size(); ++i) {
    const double x =
        pad + (w - 2 * pad) * (log.size() > 1 ? double(i) / double(log.size() - 1) : 0.5);
    const double y = h - pad - (h - 2 * pad) * (log[i].val_metric - lo) / (hi - lo);
    ss << x << "," << y << " ";
  }
  ss << "\"/>\n<text x=\"" << pad << "\" y=\"20\" font-size=\"13\">validation metric by epoch"
     << "</text>\n</svg>\n";
  return ss.str();
}

void apply_overrides(bifuse::RunConfig& cfg, const std::string& out_dir, std::uint64_t seed,
                     bool seed_set) {
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  if (seed_set) {
    cfg.seed = seed;
    cfg.training.seed = seed;
    cfg.planted.seed = seed;
  }
}

// The genotype must describe the same feature inventory and fusion shape
// the config's task provides, otherwise training would silently mismatch.
void check_genotype_against(const bifuse::Genotype& g, const bifuse::RunConfig& cfg,
                            const bifuse::Dataset& ds) {
  bifuse::require(g.space.channels == cfg.space.channels,
                  "eval: genotype channels do not match the config search space");
  bifuse::require(g.space.seq_len == cfg.space.seq_len,
                  "eval: genotype seq_len does not match the config search space");
  const std::vector<bifuse::FeatureId> have = ds.feature_ids();
  bifuse::require(g.space.features == have,
                  "eval: genotype feature inventory does not match the config task");
}

int cmd_search(const std::string& config_path, const std::string& out_dir, std::uint64_t seed,
               bool seed_set) {
  bifuse::RunConfig cfg = bifuse::load_run_config(config_path);
  apply_overrides(cfg, out_dir, seed, seed_set);
  bifuse::Dataset ds = bifuse::load_task(cfg);
  const fs::path dir = bifuse::resolve_output_dir(cfg);
  fs::create_directories(dir);

  bifuse::SearchResult result =
      bifuse::run_search(ds, cfg.space, cfg.training, (dir / "checkpoint.bin").string());

  write_file((dir / "genotype.json").string(),
             bifuse::serialize_genotype(result.best_genotype) + "\n");
  {
    std::ofstream os(dir / "search_log.jsonl");
    for (const auto& r : result.log) {
      json rec = {{"epoch", r.epoch},           {"train_loss", r.train_loss},
                  {"val_loss", r.val_loss},     {"val_metric", r.val_metric},
                  {"genotype", r.genotype_digest}, {"improved", r.improved}};
      os << rec.dump() << "\n";
    }
    if (!os) throw std::runtime_error("cannot write file: " + (dir / "search_log.jsonl").string());
  }
  {
    std::ostringstream csv;
    csv << "epoch,train_loss,val_loss,val_metric,improved\n";
    for (const auto& r : result.log)
      csv << r.epoch << "," << r.train_loss << "," << r.val_loss << "," << r.val_metric << ","
          << (r.improved ? 1 : 0) << "\n";
    write_file((dir / "curve.csv").string(), csv.str());
  }
  try {
    write_file((dir / "curve.svg").string(), curve_svg(result.log));
  } catch (const std::exception& e) {
    std::cerr << "warning: could not write curve.svg: " << e.what() << "\n";
  }

  std::cout << "best epoch " << result.best_epoch << ", val metric " << result.best_val_metric
            << "\n"
            << "genotype " << bifuse::genotype_digest(result.best_genotype) << " -> "
            << (dir / "genotype.json").string() << "\n"
            << "weight steps " << result.weight_steps << ", arch steps " << result.arch_steps
            << "\n";
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& genotype_path,
             const std::string& out_dir, std::uint64_t seed, bool seed_set) {
  bifuse::RunConfig cfg = bifuse::load_run_config(config_path);
  apply_overrides(cfg, out_dir, seed, seed_set);
  bifuse::Dataset ds = bifuse::load_task(cfg);
  bifuse::Genotype g = bifuse::deserialize_genotype(read_file(genotype_path));
  check_genotype_against(g, cfg, ds);

  bifuse::EvalResult r = bifuse::evaluate_genotype(g, ds, cfg.training, cfg.seed);
  std::cout << "genotype " << r.digest << "\n"
            << "test metric " << r.test_metric << "\n"
            << "test loss " << r.test_loss << "\n"
            << "trainable parameters " << r.param_count << "\n";
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& out_dir, std::uint64_t seed,
               bool seed_set, std::string kinds, int n_seeds) {
  bifuse::RunConfig cfg = bifuse::load_run_config(config_path);
  apply_overrides(cfg, out_dir, seed, seed_set);
  bifuse::Dataset ds = bifuse::load_task(cfg);

  std::vector<std::string> names;
  std::size_t at = 0;
  while (at <= kinds.size()) {
    std::size_t comma = kinds.find(',', at);
    if (comma == std::string::npos) comma = kinds.size();
    if (comma > at) names.push_back(kinds.substr(at, comma - at));
    at = comma + 1;
  }

  std::vector<bifuse::AblationRow> rows =
      bifuse::run_ablation(ds, cfg.space, cfg.training, names, n_seeds);

  std::ostringstream csv;
  csv << "name,mean,stddev";
  for (int s = 0; s < n_seeds; ++s) csv << ",seed" << s;
  csv << "\n";
  for (const auto& row : rows) {
    csv << row.name << "," << row.mean << "," << row.stddev;
    for (double v : row.scores) csv << "," << v;
    csv << "\n";
  }
  const fs::path dir = bifuse::resolve_output_dir(cfg);
  fs::create_directories(dir);
  write_file((dir / "ablation.csv").string(), csv.str());
  std::cout << csv.str();
  for (const auto& row : rows)
    std::cout << row.name << ": " << row.mean << " +/- " << row.stddev << "\n";
  return 0;
}

int cmd_viz(const std::string& genotype_path, const std::string& out_path) {
  bifuse::Genotype g = bifuse::deserialize_genotype(read_file(genotype_path));
  const std::string dot = bifuse::genotype_to_dot(g);
  if (out_path.empty())
    std::cout << dot;
  else
    write_file(out_path, dot);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"differentiable fusion architecture search"};
  app.require_subcommand(1);

  std::string config_path, out_dir, genotype_path, viz_out;
  std::string kinds = "searched,random_selection,late_fusion,sum,concat_fc,mha2,aoa";
  std::uint64_t seed = 0;
  int n_seeds = 5;

  CLI::App* search = app.add_subcommand("search", "run the architecture search");
  search->add_option("--config", config_path, "YAML run config")->required();
  search->add_option("--out", out_dir, "output directory override");
  CLI::Option* search_seed = search->add_option("--seed", seed, "seed override");

  CLI::App* eval = app.add_subcommand("eval", "retrain and score a saved genotype");
  eval->add_option("--config", config_path, "YAML run config")->required();
  eval->add_option("--genotype", genotype_path, "genotype JSON file")->required();
  eval->add_option("--out", out_dir, "output directory override");
  CLI::Option* eval_seed = eval->add_option("--seed", seed, "seed override");

  CLI::App* ablate = app.add_subcommand("ablate", "compare searched and reference fusions");
  ablate->add_option("--config", config_path, "YAML run config")->required();
  ablate->add_option("--out", out_dir, "output directory override");
  ablate->add_option("--kinds", kinds, "comma-separated reference list");
  ablate->add_option("--seeds", n_seeds, "number of seeds");
  CLI::Option* ablate_seed = ablate->add_option("--seed", seed, "base seed override");

  CLI::App* viz = app.add_subcommand("viz", "render a genotype to Graphviz DOT");
  viz->add_option("--genotype", genotype_path, "genotype JSON file")->required();
  viz->add_option("--out", viz_out, "DOT output path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (search->parsed())
      return cmd_search(config_path, out_dir, seed, search_seed->count() > 0);
    if (eval->parsed())
      return cmd_eval(config_path, genotype_path, out_dir, seed, eval_seed->count() > 0);
    if (ablate->parsed())
      return cmd_ablate(config_path, out_dir, seed, ablate_seed->count() > 0, kinds, n_seeds);
    if (viz->parsed()) return cmd_viz(genotype_path, viz_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
