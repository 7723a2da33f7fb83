#include "bifuse/genotype.hpp"

#include <set>
#include <sstream>

#include "bifuse/common.hpp"
#include "json.hpp"

namespace bifuse {

namespace {

constexpr int kSchemaVersion = 1;

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::invalid_argument("genotype: " + path + ": " + what);
}

int get_int(const json& j, const std::string& path, const char* key) {
  if (!j.contains(key)) fail(path + "." + key, "missing field");
  const json& v = j.at(key);
  if (!v.is_number_integer()) fail(path + "." + key, "expected an integer");
  return v.get<int>();
}

std::string get_str(const json& j, const std::string& path, const char* key) {
  if (!j.contains(key)) fail(path + "." + key, "missing field");
  const json& v = j.at(key);
  if (!v.is_string()) fail(path + "." + key, "expected a string");
  return v.get<std::string>();
}

const json& get_array(const json& j, const std::string& path, const char* key) {
  if (!j.contains(key)) fail(path + "." + key, "missing field");
  const json& v = j.at(key);
  if (!v.is_array()) fail(path + "." + key, "expected an array");
  return v;
}

}  // namespace

void validate_search_space(const SearchSpaceConfig& space) {
  require(space.n_cells >= 1, "space.n_cells: must be >= 1");
  require(space.steps_per_cell >= 1, "space.steps_per_cell: must be >= 1");
  require(space.channels >= 1, "space.channels: must be >= 1");
  require(space.seq_len >= 1, "space.seq_len: must be >= 1");
  require(space.n_features() >= 2, "space.features: at least two features required");
  std::set<std::pair<std::string, int>> seen;
  for (std::size_t i = 0; i < space.features.size(); ++i) {
    const FeatureId& f = space.features[i];
    std::string path = "space.features[" + std::to_string(i) + "]";
    if (f.modality.empty()) fail(path + ".modality", "must be non-empty");
    if (f.index < 0) fail(path + ".index", "must be >= 0");
    if (!seen.insert({f.modality, f.index}).second) fail(path, "duplicate feature id");
  }
}

void validate_genotype(const Genotype& g) {
  validate_search_space(g.space);
  if (static_cast<int>(g.cells.size()) != g.space.n_cells)
    fail("cells", "expected " + std::to_string(g.space.n_cells) + " cells, got " +
                      std::to_string(g.cells.size()));
  for (std::size_t k = 0; k < g.cells.size(); ++k) {
    const GenotypeCell& c = g.cells[k];
    const std::string cp = "cells[" + std::to_string(k) + "]";
    const int position = g.space.cell_position(static_cast<int>(k));
    if (c.input_a < 0 || c.input_a >= position)
      fail(cp + ".inputs[0]", "node index " + std::to_string(c.input_a) +
                                  " out of range (cell sees " + std::to_string(position) +
                                  " earlier nodes)");
    if (c.input_b < 0 || c.input_b >= position)
      fail(cp + ".inputs[1]", "node index " + std::to_string(c.input_b) +
                                  " out of range (cell sees " + std::to_string(position) +
                                  " earlier nodes)");
    if (c.input_a >= c.input_b)
      fail(cp + ".inputs", "input pair must be two distinct nodes in increasing order");
    if (static_cast<int>(c.steps.size()) != g.space.steps_per_cell)
      fail(cp + ".steps", "expected " + std::to_string(g.space.steps_per_cell) +
                              " steps, got " + std::to_string(c.steps.size()));
    for (std::size_t s = 0; s < c.steps.size(); ++s) {
      const StepGene& st = c.steps[s];
      const std::string sp = cp + ".steps[" + std::to_string(s) + "]";
      const int n_preds = 2 + static_cast<int>(s);
      if (st.src_x < 0 || st.src_x >= n_preds)
        fail(sp + ".src_x", "source index " + std::to_string(st.src_x) +
                                " out of range (step has " + std::to_string(n_preds) +
                                " predecessors)");
      if (st.src_y < 0 || st.src_y >= n_preds)
        fail(sp + ".src_y", "source index " + std::to_string(st.src_y) +
                                " out of range (step has " + std::to_string(n_preds) +
                                " predecessors)");
      if (static_cast<int>(st.op) < 0 || static_cast<int>(st.op) >= kNumOpKinds)
        fail(sp + ".op", "unknown op kind");
    }
  }
}

std::string serialize_genotype(const Genotype& g) {
  validate_genotype(g);
  json features = json::array();
  for (const FeatureId& f : g.space.features)
    features.push_back({{"modality", f.modality}, {"index", f.index}});
  json cells = json::array();
  for (const GenotypeCell& c : g.cells) {
    json steps = json::array();
    for (const StepGene& s : c.steps)
      steps.push_back({{"src_x", s.src_x}, {"src_y", s.src_y}, {"op", op_name(s.op)}});
    cells.push_back({{"inputs", {c.input_a, c.input_b}}, {"steps", steps}});
  }
  json doc = {{"schema_version", kSchemaVersion},
              {"space",
               {{"cells", g.space.n_cells},
                {"steps_per_cell", g.space.steps_per_cell},
                {"channels", g.space.channels},
                {"seq_len", g.space.seq_len},
                {"features", features}}},
              {"cells", cells}};
  return doc.dump();
}

Genotype deserialize_genotype(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("genotype: not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) fail("$", "expected a JSON object");
  int version = get_int(doc, "$", "schema_version");
  if (version != kSchemaVersion)
    fail("$.schema_version", "unsupported version " + std::to_string(version));

  if (!doc.contains("space")) fail("$.space", "missing field");
  const json& sp = doc.at("space");
  Genotype g;
  g.space.n_cells = get_int(sp, "space", "cells");
  g.space.steps_per_cell = get_int(sp, "space", "steps_per_cell");
  g.space.channels = get_int(sp, "space", "channels");
  g.space.seq_len = get_int(sp, "space", "seq_len");
  const json& feats = get_array(sp, "space", "features");
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const std::string path = "space.features[" + std::to_string(i) + "]";
    const json& f = feats[i];
    if (!f.is_object()) fail(path, "expected an object");
    FeatureId id;
    id.modality = get_str(f, path, "modality");
    id.index = get_int(f, path, "index");
    g.space.features.push_back(std::move(id));
  }

  const json& cells = get_array(doc, "$", "cells");
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const std::string cp = "cells[" + std::to_string(k) + "]";
    const json& c = cells[k];
    if (!c.is_object()) fail(cp, "expected an object");
    const json& inputs = get_array(c, cp, "inputs");
    if (inputs.size() != 2) fail(cp + ".inputs", "expected exactly two input indices");
    for (int t = 0; t < 2; ++t)
      if (!inputs[static_cast<std::size_t>(t)].is_number_integer())
        fail(cp + ".inputs[" + std::to_string(t) + "]", "expected an integer");
    GenotypeCell cell;
    cell.input_a = inputs[0].get<int>();
    cell.input_b = inputs[1].get<int>();
    const json& steps = get_array(c, cp, "steps");
    for (std::size_t s = 0; s < steps.size(); ++s) {
      const std::string sp2 = cp + ".steps[" + std::to_string(s) + "]";
      const json& st = steps[s];
      if (!st.is_object()) fail(sp2, "expected an object");
      StepGene gene;
      gene.src_x = get_int(st, sp2, "src_x");
      gene.src_y = get_int(st, sp2, "src_y");
      std::string op = get_str(st, sp2, "op");
      try {
        gene.op = op_from_name(op);
      } catch (const std::invalid_argument&) {
        fail(sp2 + ".op", "unknown op \"" + op + "\"");
      }
      cell.steps.push_back(gene);
    }
    g.cells.push_back(std::move(cell));
  }
  validate_genotype(g);
  return g;
}

std::string genotype_digest(const Genotype& g) { return fnv1a64_hex(serialize_genotype(g)); }

namespace {

// Display name of a global node: features keep their id, cells use C{n}.
std::string node_display(const Genotype& g, int node) {
  if (node < g.space.n_features()) {
    const FeatureId& f = g.space.features[static_cast<std::size_t>(node)];
    return f.modality + "_" + std::to_string(f.index);
  }
  return "C" + std::to_string(node - g.space.n_features() + 1);
}

}  // namespace

std::string genotype_to_dot(const Genotype& g) {
  validate_genotype(g);
  std::ostringstream os;
  os << "digraph fusion {\n  rankdir=LR;\n  node [fontname=\"Helvetica\"];\n";
  std::set<int> used;
  for (const GenotypeCell& c : g.cells) {
    used.insert(c.input_a);
    used.insert(c.input_b);
  }
  for (int f = 0; f < g.space.n_features(); ++f) {
    os << "  \"" << node_display(g, f) << "\" [shape=box";
    if (!used.count(f)) os << ", style=dotted";
    os << "];\n";
  }
  for (std::size_t k = 0; k < g.cells.size(); ++k) {
    const GenotypeCell& c = g.cells[k];
    const std::string cn = "C" + std::to_string(k + 1);
    os << "  subgraph cluster_" << cn << " {\n    label=\"" << cn << "\";\n";
    for (std::size_t s = 0; s < c.steps.size(); ++s) {
      os << "    \"" << cn << "_S" << (s + 1) << "\" [label=\"" << cn << "_S" << (s + 1)
         << "\\n" << op_name(c.steps[s].op) << "\"];\n";
    }
    os << "    \"" << cn << "\" [shape=ellipse, style=filled, fillcolor=lightgray];\n  }\n";
    // local step predecessor i: 0 -> input_a node, 1 -> input_b node,
    // 2+t -> step t+1 of this cell
    auto local_name = [&](int idx) -> std::string {
      if (idx == 0) return node_display(g, c.input_a);
      if (idx == 1) return node_display(g, c.input_b);
      return cn + "_S" + std::to_string(idx - 1);
    };
    for (std::size_t s = 0; s < c.steps.size(); ++s) {
      const StepGene& st = c.steps[s];
      const std::string sn = cn + "_S" + std::to_string(s + 1);
      os << "  \"" << local_name(st.src_x) << "\" -> \"" << sn << "\" [label=\"x\"];\n";
      os << "  \"" << local_name(st.src_y) << "\" -> \"" << sn << "\" [label=\"y\"];\n";
      os << "  \"" << sn << "\" -> \"" << cn << "\";\n";
    }
  }
  os << "  \"head\" [shape=diamond];\n";
  os << "  \"C" << g.cells.size() << "\" -> \"head\";\n";
  os << "}\n";
  return os.str();
}

const char* pattern_name(PatternKind k) {
  switch (k) {
    case PatternKind::Sum: return "sum";
    case PatternKind::ConcatFc: return "concat_fc";
    case PatternKind::Mha2: return "mha2";
    case PatternKind::Aoa: return "aoa";
  }
  throw std::invalid_argument("pattern_name: unknown PatternKind");
}

PatternKind pattern_from_name(const std::string& s) {
  for (int i = 0; i < 4; ++i)
    if (s == pattern_name(static_cast<PatternKind>(i))) return static_cast<PatternKind>(i);
  throw std::invalid_argument("pattern_from_name: unknown pattern \"" + s + "\"");
}

std::vector<StepGene> pattern_steps(PatternKind k, AoaVariant v) {
  switch (k) {
    case PatternKind::Sum: return {{0, 1, OpKind::Sum}};
    case PatternKind::ConcatFc: return {{0, 1, OpKind::ConcatFc}};
    case PatternKind::Mha2:
      // two parallel single-head attentions merged by the cell-output sum
      return {{0, 1, OpKind::Attention}, {0, 1, OpKind::Attention}};
    case PatternKind::Aoa: {
      // attention first, then a gated linear unit; the gate operand is the
      // ambiguous part of the published wiring
      StepGene glu;
      glu.op = OpKind::LinearGlu;
      if (v == AoaVariant::GateFromInput) {
        glu.src_x = 2;  // value: attention output
        glu.src_y = 0;  // gate: cell input x
      } else {
        glu.src_x = 0;  // value: cell input x
        glu.src_y = 2;  // gate: attention output
      }
      return {{0, 1, OpKind::Attention}, glu};
    }
  }
  throw std::invalid_argument("pattern_steps: unknown PatternKind");
}

Genotype make_pattern(PatternKind k, const SearchSpaceConfig& space, int input_a, int input_b,
                      AoaVariant v) {
  Genotype g;
  g.space = space;
  g.space.n_cells = 1;
  GenotypeCell cell;
  cell.input_a = input_a;
  cell.input_b = input_b;
  cell.steps = pattern_steps(k, v);
  g.space.steps_per_cell = static_cast<int>(cell.steps.size());
  g.cells.push_back(std::move(cell));
  validate_genotype(g);
  return g;
}

}  // namespace bifuse
