#include "bifuse/tasks.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace bifuse {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<FeatureDecl> default_feature_decls(int n_modalities, int per_modality) {
  require(n_modalities >= 1 && per_modality >= 1,
          "default_feature_decls: counts must be >= 1");
  std::vector<FeatureDecl> out;
  for (int m = 0; m < n_modalities; ++m) {
    std::string name(1, static_cast<char>('a' + (m % 26)));
    const Eigen::Index channels = (m % 2 == 0) ? 8 : 16;
    for (int i = 0; i < per_modality; ++i) {
      FeatureDecl d;
      d.id = {name, i};
      if (i % 2 == 0) {
        d.sample_dims = {channels};
        d.sample_roles = {AxisRole::Channel};
      } else {
        d.sample_dims = {channels, 4};
        d.sample_roles = {AxisRole::Channel, AxisRole::Temporal};
      }
      out.push_back(std::move(d));
    }
  }
  return out;
}

PlantedTaskSpec default_planted_spec(std::uint64_t seed) {
  PlantedTaskSpec spec;
  spec.features = default_feature_decls(2, 3);
  spec.mode = TaskMode::Multiclass;
  spec.n_classes = 2;
  spec.n_train = 2000;
  spec.n_val = 500;
  spec.n_test = 500;
  spec.label_noise = 0.05;
  spec.planted_a = 2;  // a_2
  spec.planted_b = 5;  // b_2
  spec.planted_op = OpKind::ConcatFc;
  spec.seed = seed;
  return spec;
}

void validate_planted_spec(const PlantedTaskSpec& spec) {
  require(spec.features.size() >= 2, "task: at least two features required");
  require(spec.features.size() <= 64, "task: at most 64 features supported");
  for (std::size_t f = 0; f < spec.features.size(); ++f) {
    const FeatureDecl& d = spec.features[f];
    const std::string path = "task.features[" + std::to_string(f) + "]";
    require(!d.sample_dims.empty() && d.sample_dims.size() <= 4,
            path + ": per-sample rank must be between 1 and 4");
    require(d.sample_dims.size() == d.sample_roles.size(),
            path + ": one axis role per dimension required");
    int channels = 0;
    for (std::size_t a = 0; a < d.sample_roles.size(); ++a) {
      require(d.sample_dims[a] >= 1, path + ": all dimensions must be >= 1");
      require(d.sample_roles[a] != AxisRole::Batch,
              path + ": batch axis is implicit and must not be declared");
      if (d.sample_roles[a] == AxisRole::Channel) ++channels;
    }
    require(channels == 1, path + ": exactly one channel axis required");
  }
  const int nf = static_cast<int>(spec.features.size());
  require(spec.planted_a >= 0 && spec.planted_a < nf && spec.planted_b >= 0 &&
              spec.planted_b < nf,
          "task.planted_pair: feature index out of range");
  require(spec.planted_a != spec.planted_b, "task.planted_pair: indices must differ");
  require(spec.planted_op != OpKind::Zero,
          "task.planted_op: the zero op makes every label constant");
  require(spec.n_classes >= 2, "task.n_classes: must be >= 2");
  require(spec.label_noise >= 0.0 && spec.label_noise < 1.0,
          "task.label_noise: must lie in [0, 1)");
  require(spec.n_train >= 1 && spec.n_val >= 1 && spec.n_test >= 1,
          "task.samples: every split needs at least one sample");
  require(spec.label_channels >= 1 && spec.label_seq_len >= 1,
          "task.label pipeline dimensions must be >= 1");
}

namespace {

// The fixed label function: private channel maps for the planted pair,
// the planted primitive, mean-pool, and a random linear readout.  The
// input scale and per-class offsets are calibrated on a held-out seeded
// batch so classes come out roughly balanced regardless of shapes.
struct LabelPipeline {
  MatrixX<double> map_a, map_b;
  double scale_a = 1.0, scale_b = 1.0;
  LinearGluParams<double> glu;
  ConcatFcParams<double> cfc;
  MatrixX<double> readout;
  VectorX<double> offsets;
};

MatrixX<double> gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double scale, Rng& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  MatrixX<double> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = d(rng) * scale;
  return m;
}

RawFeature<double> random_raw_feature(const FeatureDecl& decl, int n, Rng& rng) {
  RawFeature<double> f;
  f.dims.push_back(n);
  f.roles.push_back(AxisRole::Batch);
  for (std::size_t a = 0; a < decl.sample_dims.size(); ++a) {
    f.dims.push_back(decl.sample_dims[a]);
    f.roles.push_back(decl.sample_roles[a]);
  }
  f.data.resize(static_cast<std::size_t>(f.size()));
  std::normal_distribution<double> d(0.0, 1.0);
  for (auto& v : f.data) v = d(rng);
  return f;
}

// Routes two batched raw features through the maps and the planted op down
// to uncentered class logits.
MatrixX<double> pipeline_logits(const LabelPipeline& p, const PlantedTaskSpec& spec,
                                const RawFeature<double>& raw_a,
                                const RawFeature<double>& raw_b) {
  const int n = static_cast<int>(raw_a.dims[0]);
  MatrixX<double> pa = pool_and_interp(raw_a, spec.label_seq_len);
  MatrixX<double> pb = pool_and_interp(raw_b, spec.label_seq_len);
  TensorNcl<double> ta(n, spec.label_channels, spec.label_seq_len);
  TensorNcl<double> tb(n, spec.label_channels, spec.label_seq_len);
  ta.m = p.map_a * pa / p.scale_a;
  tb.m = p.map_b * pb / p.scale_b;
  TensorNcl<double> fused = op_forward(spec.planted_op, ta, tb, &p.glu, &p.cfc);
  MatrixX<double> pooled = mean_over_length(fused);
  return p.readout * pooled;
}

LabelPipeline build_label_pipeline(const PlantedTaskSpec& spec) {
  LabelPipeline p;
  const int ca = spec.features[static_cast<std::size_t>(spec.planted_a)].channel_count();
  const int cb = spec.features[static_cast<std::size_t>(spec.planted_b)].channel_count();
  Rng prng = make_rng(spec.seed, 11);
  p.map_a = gaussian_matrix(spec.label_channels, ca, 1.0 / std::sqrt(double(ca)), prng);
  p.map_b = gaussian_matrix(spec.label_channels, cb, 1.0 / std::sqrt(double(cb)), prng);
  const int lc = spec.label_channels;
  if (spec.planted_op == OpKind::LinearGlu) {
    p.glu.value_w.resize(lc, lc);
    p.glu.gate_w.resize(lc, lc);
    p.glu.value_w.w = gaussian_matrix(lc, lc, 1.0 / std::sqrt(double(lc)), prng);
    p.glu.gate_w.w = gaussian_matrix(lc, lc, 1.0 / std::sqrt(double(lc)), prng);
  }
  if (spec.planted_op == OpKind::ConcatFc) {
    p.cfc.w.resize(lc, 2 * lc);
    p.cfc.b.resize(lc, 1);
    p.cfc.w.w = gaussian_matrix(lc, 2 * lc, 1.0 / std::sqrt(double(2 * lc)), prng);
    p.cfc.b.w = gaussian_matrix(lc, 1, 0.5, prng);
  }
  p.readout = gaussian_matrix(spec.n_classes, lc, 1.0 / std::sqrt(double(lc)), prng);

  // calibration pass: fix input scales, then per-class offsets
  const int n_cal = 512;
  Rng crng = make_rng(spec.seed, 13);
  RawFeature<double> cal_a =
      random_raw_feature(spec.features[static_cast<std::size_t>(spec.planted_a)], n_cal, crng);
  RawFeature<double> cal_b =
      random_raw_feature(spec.features[static_cast<std::size_t>(spec.planted_b)], n_cal, crng);
  p.scale_a = p.scale_b = 1.0;
  p.offsets = VectorX<double>::Zero(spec.n_classes);
  {
    MatrixX<double> pa = pool_and_interp(cal_a, spec.label_seq_len);
    MatrixX<double> pb = pool_and_interp(cal_b, spec.label_seq_len);
    MatrixX<double> ma = p.map_a * pa;
    MatrixX<double> mb = p.map_b * pb;
    auto stddev = [](const MatrixX<double>& m) {
      double mean = m.mean();
      double var = (m.array() - mean).square().mean();
      return std::max(std::sqrt(var), 1e-12);
    };
    p.scale_a = stddev(ma);
    p.scale_b = stddev(mb);
  }
  MatrixX<double> cal_logits = pipeline_logits(p, spec, cal_a, cal_b);
  for (int c = 0; c < spec.n_classes; ++c) {
    std::vector<double> v(cal_logits.cols());
    for (Eigen::Index j = 0; j < cal_logits.cols(); ++j) v[static_cast<std::size_t>(j)] = cal_logits(c, j);
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    p.offsets(c) = v[v.size() / 2];
  }
  return p;
}

Eigen::VectorXi logits_to_labels(const MatrixX<double>& logits, const VectorX<double>& offsets) {
  Eigen::VectorXi y(logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    int best = 0;
    for (Eigen::Index c = 1; c < logits.rows(); ++c)
      if (logits(c, j) - offsets(c) > logits(best, j) - offsets(best)) best = static_cast<int>(c);
    y(j) = best;
  }
  return y;
}

MatrixX<double> logits_to_bits(const MatrixX<double>& logits, const VectorX<double>& offsets) {
  MatrixX<double> bits(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j)
    for (Eigen::Index c = 0; c < logits.rows(); ++c)
      bits(c, j) = logits(c, j) - offsets(c) > 0.0 ? 1.0 : 0.0;
  return bits;
}

Split generate_split(const PlantedTaskSpec& spec, const LabelPipeline& pipe, int n, int sid) {
  Split s;
  s.size = n;
  s.features.reserve(spec.features.size());
  for (std::size_t f = 0; f < spec.features.size(); ++f) {
    Rng frng = make_rng(spec.seed, 20 + static_cast<std::uint64_t>(sid) * 64 + f);
    s.features.push_back(random_raw_feature(spec.features[f], n, frng));
  }
  MatrixX<double> logits =
      pipeline_logits(pipe, spec, s.features[static_cast<std::size_t>(spec.planted_a)],
                      s.features[static_cast<std::size_t>(spec.planted_b)]);
  Rng nrng = make_rng(spec.seed, 17 + static_cast<std::uint64_t>(sid));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (spec.mode == TaskMode::Multiclass) {
    s.labels = logits_to_labels(logits, pipe.offsets);
    if (spec.label_noise > 0.0) {
      std::uniform_int_distribution<int> other(0, spec.n_classes - 2);
      for (Eigen::Index j = 0; j < s.labels.size(); ++j)
        if (u(nrng) < spec.label_noise) {
          int shift = 1 + other(nrng);
          s.labels(j) = (s.labels(j) + shift) % spec.n_classes;
        }
    }
  } else {
    s.label_bits = logits_to_bits(logits, pipe.offsets);
    if (spec.label_noise > 0.0) {
      for (Eigen::Index j = 0; j < s.label_bits.cols(); ++j)
        for (Eigen::Index c = 0; c < s.label_bits.rows(); ++c)
          if (u(nrng) < spec.label_noise) s.label_bits(c, j) = 1.0 - s.label_bits(c, j);
    }
  }
  return s;
}

}  // namespace

Dataset generate_planted(const PlantedTaskSpec& spec) {
  validate_planted_spec(spec);
  LabelPipeline pipe = build_label_pipeline(spec);
  Dataset ds;
  ds.features = spec.features;
  ds.mode = spec.mode;
  ds.n_classes = spec.n_classes;
  ds.spec = spec;
  ds.train = generate_split(spec, pipe, spec.n_train, 0);
  ds.val = generate_split(spec, pipe, spec.n_val, 1);
  ds.test = generate_split(spec, pipe, spec.n_test, 2);
  return ds;
}

Eigen::VectorXi oracle_labels(const PlantedTaskSpec& spec, const Split& split) {
  validate_planted_spec(spec);
  LabelPipeline pipe = build_label_pipeline(spec);
  MatrixX<double> logits =
      pipeline_logits(pipe, spec, split.features[static_cast<std::size_t>(spec.planted_a)],
                      split.features[static_cast<std::size_t>(spec.planted_b)]);
  return logits_to_labels(logits, pipe.offsets);
}

MatrixX<double> oracle_label_bits(const PlantedTaskSpec& spec, const Split& split) {
  validate_planted_spec(spec);
  LabelPipeline pipe = build_label_pipeline(spec);
  MatrixX<double> logits =
      pipeline_logits(pipe, spec, split.features[static_cast<std::size_t>(spec.planted_a)],
                      split.features[static_cast<std::size_t>(spec.planted_b)]);
  return logits_to_bits(logits, pipe.offsets);
}

// --- external datasets -------------------------------------------------------

namespace {

constexpr char kArrayMagic[4] = {'N', 'F', 'A', '1'};
constexpr std::uint32_t kDtypeF64 = 1;

void write_array_file(const fs::path& path, const std::vector<Eigen::Index>& dims,
                      const double* data, std::uint64_t* checksum) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("dataset: cannot write feature file: " + path.string());
  os.write(kArrayMagic, 4);
  std::uint32_t dtype = kDtypeF64, rank = static_cast<std::uint32_t>(dims.size());
  os.write(reinterpret_cast<const char*>(&dtype), sizeof dtype);
  os.write(reinterpret_cast<const char*>(&rank), sizeof rank);
  std::uint64_t total = 1;
  for (Eigen::Index d : dims) {
    std::uint64_t d64 = static_cast<std::uint64_t>(d);
    os.write(reinterpret_cast<const char*>(&d64), sizeof d64);
    total *= d64;
  }
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(total * sizeof(double)));
  if (!os) throw std::runtime_error("dataset: short write on feature file: " + path.string());
  if (checksum) *checksum = fnv1a64(data, total * sizeof(double));
}

std::vector<double> read_array_file(const fs::path& path, std::vector<Eigen::Index>& dims) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("dataset: missing feature file: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kArrayMagic, 4) != 0)
    throw std::runtime_error("dataset: bad magic in feature file: " + path.string());
  std::uint32_t dtype = 0, rank = 0;
  is.read(reinterpret_cast<char*>(&dtype), sizeof dtype);
  is.read(reinterpret_cast<char*>(&rank), sizeof rank);
  if (!is || dtype != kDtypeF64)
    throw std::runtime_error("dataset: unsupported dtype in feature file: " + path.string());
  if (rank < 1 || rank > 5)
    throw std::runtime_error("dataset: bad rank in feature file: " + path.string());
  dims.clear();
  std::uint64_t total = 1;
  for (std::uint32_t a = 0; a < rank; ++a) {
    std::uint64_t d = 0;
    is.read(reinterpret_cast<char*>(&d), sizeof d);
    if (!is || d == 0 || d > (1ull << 32))
      throw std::runtime_error("dataset: bad dimension in feature file: " + path.string());
    dims.push_back(static_cast<Eigen::Index>(d));
    total *= d;
  }
  std::vector<double> data(total);
  is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(total * sizeof(double)));
  if (!is) throw std::runtime_error("dataset: truncated feature file: " + path.string());
  return data;
}

const char* split_name(int sid) { return sid == 0 ? "train" : (sid == 1 ? "val" : "test"); }

}  // namespace

std::string export_dataset(const Dataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  json features = json::array();
  for (const FeatureDecl& d : ds.features) {
    json dims = json::array(), roles = json::array();
    for (Eigen::Index v : d.sample_dims) dims.push_back(static_cast<std::int64_t>(v));
    for (AxisRole r : d.sample_roles) roles.push_back(axis_role_name(r));
    features.push_back({{"modality", d.id.modality},
                        {"index", d.id.index},
                        {"sample_dims", dims},
                        {"axis_roles", roles}});
  }
  json samples = json::array();
  const Split* splits[3] = {&ds.train, &ds.val, &ds.test};
  for (int sid = 0; sid < 3; ++sid) {
    const Split& s = *splits[sid];
    for (int i = 0; i < s.size; ++i) {
      json files = json::array(), sums = json::array();
      for (std::size_t f = 0; f < ds.features.size(); ++f) {
        const RawFeature<double>& rf = s.features[f];
        const Eigen::Index per_sample = rf.size() / rf.dims[0];
        std::string name = std::string(split_name(sid)) + "_" + std::to_string(i) + "_f" +
                           std::to_string(f) + ".bin";
        std::uint64_t checksum = 0;
        write_array_file(fs::path(dir) / name, ds.features[f].sample_dims,
                         rf.data.data() + static_cast<std::size_t>(per_sample) * i, &checksum);
        files.push_back(name);
        std::ostringstream hex;
        hex << std::hex;
        hex.width(16);
        hex.fill('0');
        hex << checksum;
        sums.push_back(hex.str());
      }
      json sample = {{"split", split_name(sid)}, {"files", files}, {"checksums", sums}};
      if (ds.mode == TaskMode::Multiclass) {
        sample["label"] = s.labels(i);
      } else {
        json bits = json::array();
        for (Eigen::Index c = 0; c < s.label_bits.rows(); ++c)
          bits.push_back(static_cast<int>(s.label_bits(c, i)));
        sample["label_bits"] = bits;
      }
      samples.push_back(std::move(sample));
    }
  }
  json doc = {{"schema_version", 1},
              {"task", {{"mode", task_mode_name(ds.mode)}, {"n_classes", ds.n_classes}}},
              {"features", features},
              {"samples", samples}};
  const std::string manifest = (fs::path(dir) / "manifest.json").string();
  std::ofstream os(manifest);
  os << doc.dump(2) << "\n";
  if (!os) throw std::runtime_error("dataset: cannot write manifest: " + manifest);
  return manifest;
}

Dataset load_external(const std::string& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw std::runtime_error("dataset: missing manifest: " + manifest_path);
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("dataset: manifest is not valid JSON: " + std::string(e.what()));
  }
  auto fail = [](const std::string& path, const std::string& what) -> void {
    throw std::invalid_argument("dataset: manifest: " + path + ": " + what);
  };
  if (!doc.is_object()) fail("$", "expected an object");
  if (doc.value("schema_version", -1) != 1) fail("$.schema_version", "unsupported version");
  if (!doc.contains("task") || !doc["task"].is_object()) fail("$.task", "missing object");
  Dataset ds;
  ds.mode = task_mode_from_name(doc["task"].value("mode", ""));
  ds.n_classes = doc["task"].value("n_classes", 0);
  require(ds.n_classes >= 1, "dataset: manifest: $.task.n_classes: must be >= 1");
  if (!doc.contains("features") || !doc["features"].is_array())
    fail("$.features", "missing array");
  for (std::size_t f = 0; f < doc["features"].size(); ++f) {
    const json& jf = doc["features"][f];
    const std::string path = "$.features[" + std::to_string(f) + "]";
    if (!jf.is_object()) fail(path, "expected an object");
    FeatureDecl d;
    d.id.modality = jf.value("modality", "");
    if (d.id.modality.empty()) fail(path + ".modality", "must be non-empty");
    if (!jf.contains("index") || !jf["index"].is_number_integer())
      fail(path + ".index", "expected an integer");
    d.id.index = jf["index"].get<int>();
    if (!jf.contains("sample_dims") || !jf["sample_dims"].is_array())
      fail(path + ".sample_dims", "expected an array");
    for (const json& v : jf["sample_dims"]) {
      if (!v.is_number_integer()) fail(path + ".sample_dims", "expected integers");
      d.sample_dims.push_back(v.get<Eigen::Index>());
    }
    if (!jf.contains("axis_roles") || !jf["axis_roles"].is_array())
      fail(path + ".axis_roles", "expected an array");
    for (const json& v : jf["axis_roles"]) {
      if (!v.is_string()) fail(path + ".axis_roles", "expected strings");
      d.sample_roles.push_back(axis_role_from_name(v.get<std::string>()));
    }
    if (d.sample_dims.size() != d.sample_roles.size())
      fail(path, "sample_dims and axis_roles must have equal length");
    ds.features.push_back(std::move(d));
  }
  require(ds.features.size() >= 2, "dataset: manifest: $.features: at least two required");

  if (!doc.contains("samples") || !doc["samples"].is_array()) fail("$.samples", "missing array");
  const fs::path base = fs::path(manifest_path).parent_path();
  struct Row {
    int label = 0;
    std::vector<double> bits;
    std::vector<std::vector<double>> feature_data;
  };
  std::vector<Row> rows[3];
  for (std::size_t i = 0; i < doc["samples"].size(); ++i) {
    const json& js = doc["samples"][i];
    const std::string path = "$.samples[" + std::to_string(i) + "]";
    if (!js.is_object()) fail(path, "expected an object");
    std::string split = js.value("split", "");
    int sid = split == "train" ? 0 : (split == "val" ? 1 : (split == "test" ? 2 : -1));
    if (sid < 0) fail(path + ".split", "expected train, val, or test");
    if (!js.contains("files") || !js["files"].is_array() ||
        js["files"].size() != ds.features.size())
      fail(path + ".files", "expected one file per feature");
    const bool have_sums = js.contains("checksums");
    if (have_sums &&
        (!js["checksums"].is_array() || js["checksums"].size() != ds.features.size()))
      fail(path + ".checksums", "expected one checksum per feature");
    Row row;
    for (std::size_t f = 0; f < ds.features.size(); ++f) {
      const json& jf = js["files"][f];
      if (!jf.is_string()) fail(path + ".files", "expected strings");
      const fs::path file = base / jf.get<std::string>();
      std::vector<Eigen::Index> dims;
      std::vector<double> data = read_array_file(file, dims);
      if (dims != ds.features[f].sample_dims)
        throw std::invalid_argument("dataset: feature file shape mismatch: " + file.string());
      if (have_sums) {
        std::uint64_t sum = fnv1a64(data.data(), data.size() * sizeof(double));
        std::ostringstream hex;
        hex << std::hex;
        hex.width(16);
        hex.fill('0');
        hex << sum;
        if (hex.str() != js["checksums"][f].get<std::string>())
          throw std::runtime_error("dataset: checksum mismatch for feature file: " +
                                   file.string());
      }
      row.feature_data.push_back(std::move(data));
    }
    if (ds.mode == TaskMode::Multiclass) {
      if (!js.contains("label") || !js["label"].is_number_integer())
        fail(path + ".label", "expected an integer");
      row.label = js["label"].get<int>();
      if (row.label < 0 || row.label >= ds.n_classes) fail(path + ".label", "out of range");
    } else {
      if (!js.contains("label_bits") || !js["label_bits"].is_array() ||
          static_cast<int>(js["label_bits"].size()) != ds.n_classes)
        fail(path + ".label_bits", "expected one bit per class");
      for (const json& v : js["label_bits"]) row.bits.push_back(v.get<double>());
    }
    rows[sid].push_back(std::move(row));
  }

  Split* splits[3] = {&ds.train, &ds.val, &ds.test};
  for (int sid = 0; sid < 3; ++sid) {
    Split& s = *splits[sid];
    const auto& r = rows[sid];
    s.size = static_cast<int>(r.size());
    require(s.size >= 1, std::string("dataset: manifest: split \"") + split_name(sid) +
                             "\" has no samples");
    for (std::size_t f = 0; f < ds.features.size(); ++f) {
      RawFeature<double> rf;
      rf.dims.push_back(s.size);
      rf.roles.push_back(AxisRole::Batch);
      for (std::size_t a = 0; a < ds.features[f].sample_dims.size(); ++a) {
        rf.dims.push_back(ds.features[f].sample_dims[a]);
        rf.roles.push_back(ds.features[f].sample_roles[a]);
      }
      rf.data.resize(static_cast<std::size_t>(rf.size()));
      const std::size_t per_sample = r.empty() ? 0 : r[0].feature_data[f].size();
      for (std::size_t i = 0; i < r.size(); ++i)
        std::copy(r[i].feature_data[f].begin(), r[i].feature_data[f].end(),
                  rf.data.begin() + static_cast<std::ptrdiff_t>(per_sample * i));
      validate_raw_feature(rf);
      s.features.push_back(std::move(rf));
    }
    if (ds.mode == TaskMode::Multiclass) {
      s.labels.resize(s.size);
      for (int i = 0; i < s.size; ++i) s.labels(i) = r[static_cast<std::size_t>(i)].label;
    } else {
      s.label_bits.resize(ds.n_classes, s.size);
      for (int i = 0; i < s.size; ++i)
        for (int c = 0; c < ds.n_classes; ++c)
          s.label_bits(c, i) = r[static_cast<std::size_t>(i)].bits[static_cast<std::size_t>(c)];
    }
  }
  return ds;
}

// --- training-ready views ----------------------------------------------------

PreparedSplit prepare_split(const Split& split, int target_l) {
  PreparedSplit p;
  p.size = split.size;
  p.labels = split.labels;
  p.label_bits = split.label_bits;
  p.features.reserve(split.features.size());
  for (const auto& rf : split.features) p.features.push_back(pool_and_interp(rf, target_l));
  return p;
}

PreparedSplit gather_batch(const PreparedSplit& prepared, const std::vector<int>& idx,
                           int target_l) {
  PreparedSplit p;
  p.size = static_cast<int>(idx.size());
  if (prepared.labels.size() > 0) {
    p.labels.resize(p.size);
    for (int i = 0; i < p.size; ++i) p.labels(i) = prepared.labels(idx[static_cast<std::size_t>(i)]);
  }
  if (prepared.label_bits.size() > 0) {
    p.label_bits.resize(prepared.label_bits.rows(), p.size);
    for (int i = 0; i < p.size; ++i)
      p.label_bits.col(i) = prepared.label_bits.col(idx[static_cast<std::size_t>(i)]);
  }
  p.features.reserve(prepared.features.size());
  for (const auto& m : prepared.features) {
    MatrixX<double> out(m.rows(), static_cast<Eigen::Index>(p.size) * target_l);
    for (int i = 0; i < p.size; ++i)
      out.middleCols(static_cast<Eigen::Index>(i) * target_l, target_l) =
          m.middleCols(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(i)]) * target_l,
                       target_l);
    p.features.push_back(std::move(out));
  }
  return p;
}

PreparedSplit concat_splits(const PreparedSplit& a, const PreparedSplit& b, int target_l) {
  require(a.features.size() == b.features.size(), "concat_splits: feature count mismatch");
  PreparedSplit p;
  p.size = a.size + b.size;
  if (a.labels.size() > 0) {
    p.labels.resize(p.size);
    p.labels.head(a.size) = a.labels;
    p.labels.tail(b.size) = b.labels;
  }
  if (a.label_bits.size() > 0) {
    p.label_bits.resize(a.label_bits.rows(), p.size);
    p.label_bits.leftCols(a.size) = a.label_bits;
    p.label_bits.rightCols(b.size) = b.label_bits;
  }
  for (std::size_t f = 0; f < a.features.size(); ++f) {
    MatrixX<double> m(a.features[f].rows(), (a.features[f].cols() + b.features[f].cols()));
    m.leftCols(a.features[f].cols()) = a.features[f];
    m.rightCols(b.features[f].cols()) = b.features[f];
    require(m.cols() == static_cast<Eigen::Index>(p.size) * target_l,
            "concat_splits: prepared length mismatch");
    p.features.push_back(std::move(m));
  }
  return p;
}

}  // namespace bifuse
