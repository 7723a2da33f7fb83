#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>

#include "bifuse/genotype.hpp"

using namespace bifuse;

namespace {

SearchSpaceConfig small_space(int n_cells = 2, int steps = 1) {
  SearchSpaceConfig s;
  s.n_cells = n_cells;
  s.steps_per_cell = steps;
  s.channels = 8;
  s.seq_len = 2;
  s.features = {{"img", 0}, {"img", 1}, {"img", 2}, {"txt", 0}, {"txt", 1}};
  return s;
}

Genotype random_genotype(Rng& rng) {
  SearchSpaceConfig s;
  std::uniform_int_distribution<int> cells(1, 3), steps(1, 3), feats(2, 5), dim(1, 16);
  s.n_cells = cells(rng);
  s.steps_per_cell = steps(rng);
  s.channels = dim(rng);
  s.seq_len = dim(rng);
  const int nf = feats(rng);
  for (int f = 0; f < nf; ++f)
    s.features.push_back({f % 2 == 0 ? "a" : "b", f / 2});

  Genotype g;
  g.space = s;
  for (int k = 0; k < s.n_cells; ++k) {
    GenotypeCell cell;
    const int preds = s.cell_position(k);
    std::uniform_int_distribution<int> da(0, preds - 1);
    int a = da(rng);
    std::uniform_int_distribution<int> db(0, preds - 2);
    int b = db(rng);
    if (b >= a) ++b;
    cell.input_a = std::min(a, b);
    cell.input_b = std::max(a, b);
    for (int i = 0; i < s.steps_per_cell; ++i) {
      std::uniform_int_distribution<int> src(0, 2 + i - 1), op(0, kNumOpKinds - 1);
      cell.steps.push_back({src(rng), src(rng), static_cast<OpKind>(op(rng))});
    }
    g.cells.push_back(std::move(cell));
  }
  return g;
}

}  // namespace

TEST_CASE("serialization round-trips on randomized genotypes") {
  Rng rng = make_rng(61);
  std::set<std::string> digests;
  for (int rep = 0; rep < 100; ++rep) {
    Genotype g = random_genotype(rng);
    const std::string text = serialize_genotype(g);
    Genotype back = deserialize_genotype(text);
    CHECK(back == g);
    CHECK(genotype_digest(back) == genotype_digest(g));
    CHECK(serialize_genotype(back) == text);
    digests.insert(genotype_digest(g));
  }
  CHECK(digests.size() > 50);  // digests separate distinct architectures
}

TEST_CASE("a hand-written two-cell architecture survives the round trip") {
  // cell 0 fuses img_2 with txt_0; cell 1 refines cell 0 with txt_0 again
  Genotype g;
  g.space = small_space(2, 1);
  g.cells.push_back({2, 3, {{0, 1, OpKind::ConcatFc}}});
  g.cells.push_back({3, 5, {{0, 1, OpKind::LinearGlu}}});
  CHECK_NOTHROW(validate_genotype(g));

  Genotype back = deserialize_genotype(serialize_genotype(g));
  CHECK(back == g);
  CHECK(back.space.features[2] == FeatureId{"img", 2});
  CHECK(back.cells[1].steps[0].op == OpKind::LinearGlu);
}

TEST_CASE("structural validation reports the offending field path") {
  Genotype g;
  g.space = small_space(1, 1);
  g.cells.push_back({0, 1, {{0, 1, OpKind::Sum}}});
  CHECK_NOTHROW(validate_genotype(g));

  SUBCASE("cell count mismatch") {
    g.cells.push_back({0, 1, {{0, 1, OpKind::Sum}}});
    CHECK_THROWS_WITH_AS(validate_genotype(g),
                         doctest::Contains("cells"), std::invalid_argument);
  }
  SUBCASE("unordered input pair") {
    g.cells[0].input_b = 0;
    try {
      validate_genotype(g);
      FAIL("expected a validation error");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("cells[0]") != std::string::npos);
    }
  }
  SUBCASE("input beyond the cell position") {
    g.cells[0].input_b = 5;  // cell 0 may only see the 5 features (indices 0..4)
    CHECK_THROWS_AS(validate_genotype(g), std::invalid_argument);
  }
  SUBCASE("step source out of range") {
    g.cells[0].steps[0].src_x = 2;  // first step sees exactly two nodes
    try {
      validate_genotype(g);
      FAIL("expected a validation error");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("steps[0]") != std::string::npos);
    }
  }
  SUBCASE("wrong step count") {
    g.cells[0].steps.push_back({0, 1, OpKind::Sum});
    CHECK_THROWS_AS(validate_genotype(g), std::invalid_argument);
  }
}

TEST_CASE("deserialization rejects malformed documents with field paths") {
  Genotype g;
  g.space = small_space(1, 1);
  g.cells.push_back({0, 1, {{0, 1, OpKind::Sum}}});
  const std::string good = serialize_genotype(g);

  CHECK_THROWS_AS(deserialize_genotype("not json at all"), std::invalid_argument);

  std::string bad_version = good;
  const auto at = bad_version.find("\"schema_version\":1");
  REQUIRE(at != std::string::npos);
  bad_version.replace(at, 18, "\"schema_version\":9");
  CHECK_THROWS_WITH_AS(deserialize_genotype(bad_version),
                       doctest::Contains("schema_version"), std::invalid_argument);

  std::string bad_op = good;
  const auto opat = bad_op.find("\"sum\"");
  REQUIRE(opat != std::string::npos);
  bad_op.replace(opat, 5, "\"mlp\"");
  try {
    deserialize_genotype(bad_op);
    FAIL("expected a parse error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("op") != std::string::npos);
  }
}

TEST_CASE("dot rendering is deterministic and structure-sensitive") {
  Genotype g;
  g.space = small_space(2, 1);
  g.cells.push_back({2, 3, {{0, 1, OpKind::ConcatFc}}});
  g.cells.push_back({3, 5, {{0, 1, OpKind::LinearGlu}}});

  const std::string dot = genotype_to_dot(g);
  CHECK(dot == genotype_to_dot(g));
  CHECK(dot.find("digraph") != std::string::npos);
  CHECK(dot.find("C1_S1") != std::string::npos);  // step m of cell n renders as Cn_Sm, 1-based
  CHECK(dot.find("C2_S1") != std::string::npos);
  CHECK(dot.find("concat_fc") != std::string::npos);
  CHECK(dot.find("linear_glu") != std::string::npos);
  CHECK(dot.find("head") != std::string::npos);

  Genotype other = g;
  other.cells[1].steps[0].op = OpKind::Sum;
  CHECK(genotype_to_dot(other) != dot);
  CHECK(genotype_digest(other) != genotype_digest(g));
}

TEST_CASE("pattern constructors produce the documented wirings") {
  SearchSpaceConfig s = small_space(1, 1);

  Genotype sum = make_pattern(PatternKind::Sum, s, 0, 3);
  CHECK(sum.cells.size() == 1);
  CHECK(sum.cells[0].input_a == 0);
  CHECK(sum.cells[0].input_b == 3);
  CHECK(sum.cells[0].steps == std::vector<StepGene>{{0, 1, OpKind::Sum}});

  Genotype cfc = make_pattern(PatternKind::ConcatFc, s, 1, 2);
  CHECK(cfc.cells[0].steps == std::vector<StepGene>{{0, 1, OpKind::ConcatFc}});

  Genotype mha = make_pattern(PatternKind::Mha2, s, 0, 1);
  CHECK(mha.space.steps_per_cell == 2);
  CHECK(mha.cells[0].steps ==
        std::vector<StepGene>{{0, 1, OpKind::Attention}, {0, 1, OpKind::Attention}});

  Genotype aoa_in = make_pattern(PatternKind::Aoa, s, 0, 1, AoaVariant::GateFromInput);
  CHECK(aoa_in.cells[0].steps ==
        std::vector<StepGene>{{0, 1, OpKind::Attention}, {2, 0, OpKind::LinearGlu}});

  Genotype aoa_att = make_pattern(PatternKind::Aoa, s, 0, 1, AoaVariant::GateFromAttention);
  CHECK(aoa_att.cells[0].steps ==
        std::vector<StepGene>{{0, 1, OpKind::Attention}, {0, 2, OpKind::LinearGlu}});

  CHECK(pattern_from_name(pattern_name(PatternKind::Aoa)) == PatternKind::Aoa);
  CHECK_THROWS_AS(pattern_from_name("bilinear"), std::invalid_argument);
}
