#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "bifuse/primitive_ops.hpp"
#include "oracles.hpp"

using namespace bifuse;

namespace {

TensorNcl<double> rand_t(int n, int c, int l, Rng& rng, double scale = 1.0) {
  return random_tensor<double>(n, c, l, rng, scale);
}

}  // namespace

TEST_CASE("each op matches its scalar-loop reference") {
  Rng rng = make_rng(42);
  const int n = 3, c = 5, l = 4;
  TensorNcl<double> x = rand_t(n, c, l, rng);
  TensorNcl<double> y = rand_t(n, c, l, rng);
  LinearGluParams<double> glu;
  glu.init(c, rng);
  ConcatFcParams<double> cfc;
  cfc.init(c, rng);
  cfc.b.init_logit_noise(rng, 0.3);  // exercise nonzero bias

  CHECK(refs::linf(op_forward<double>(OpKind::Zero, x, y, nullptr, nullptr), refs::zero_ref(x)) == 0.0);
  CHECK(refs::linf(op_forward<double>(OpKind::Sum, x, y, nullptr, nullptr), refs::sum_ref(x, y)) <
        1e-14);
  CHECK(refs::linf(op_forward<double>(OpKind::Attention, x, y, nullptr, nullptr),
                   refs::attention_ref(x, y)) < 1e-12);
  CHECK(refs::linf(op_forward<double>(OpKind::LinearGlu, x, y, &glu, nullptr),
                   refs::linear_glu_ref(x, y, glu.value_w.w, glu.gate_w.w)) < 1e-12);
  CHECK(refs::linf(op_forward<double>(OpKind::ConcatFc, x, y, nullptr, &cfc),
                   refs::concat_fc_ref(x, y, cfc.w.w, cfc.b.w.col(0))) < 1e-12);
}

TEST_CASE("attention on a worked two-position example") {
  // x selects position q's own channel; y holds columns (1,3) and (2,4).
  // Both score rows differ by 1/sqrt(2), so each output position is
  // y0 + sigmoid(1/sqrt(2)) * (y1 - y0).
  TensorNcl<double> x(1, 2, 2), y(1, 2, 2);
  x.m << 1, 0, 0, 1;
  y.m << 1, 2, 3, 4;
  const double a = 1.0 / (1.0 + std::exp(-1.0 / std::sqrt(2.0)));
  TensorNcl<double> out = attention_op(x, y);
  for (int q = 0; q < 2; ++q) {
    CHECK(out(0, 0, q) == doctest::Approx(1.0 + a).epsilon(1e-12));
    CHECK(out(0, 1, q) == doctest::Approx(3.0 + a).epsilon(1e-12));
  }
}

TEST_CASE("attention rejects overflowing scores") {
  TensorNcl<double> x(1, 2, 2), y(1, 2, 2);
  x.m.setConstant(1e200);
  y.m.setConstant(1e200);
  CHECK_THROWS_AS(attention_op(x, y), std::runtime_error);
}

TEST_CASE("attention outputs stay in the convex hull of value positions") {
  Rng rng = make_rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    TensorNcl<double> x = rand_t(2, 3, 4, rng, 2.0);
    TensorNcl<double> y = rand_t(2, 3, 4, rng, 2.0);
    TensorNcl<double> out = attention_op(x, y);
    for (int n = 0; n < 2; ++n)
      for (int q = 0; q < 4; ++q) {
        refs::Mat value = y.sample(n);
        refs::Vec v = out.sample(n).col(q);
        CHECK(refs::in_convex_hull(value, v));
      }
  }
}

TEST_CASE("op gradients agree with finite differences") {
  Rng rng = make_rng(11);
  const int n = 2, c = 4, l = 3;
  for (OpKind kind : {OpKind::Sum, OpKind::Attention, OpKind::LinearGlu, OpKind::ConcatFc}) {
    const char* kind_name = op_name(kind);
    CAPTURE(kind_name);
    TensorNcl<double> x = rand_t(n, c, l, rng);
    TensorNcl<double> y = rand_t(n, c, l, rng);
    LinearGluParams<double> glu;
    glu.init(c, rng);
    ConcatFcParams<double> cfc;
    cfc.init(c, rng);
    cfc.b.init_logit_noise(rng, 0.3);
    TensorNcl<double> probe = rand_t(n, c, l, rng);  // fixed projection to a scalar

    refs::FdChecker fd;
    fd.loss = [&]() {
      TensorNcl<double> out = op_forward<double>(kind, x, y, &glu, &cfc);
      return (out.m.array() * probe.m.array()).sum();
    };

    OpCache<double> cache;
    TensorNcl<double> out = op_forward<double>(kind, x, y, &glu, &cfc, &cache);
    TensorNcl<double> gx = TensorNcl<double>::zeros_like(x), gy = TensorNcl<double>::zeros_like(y);
    glu.value_w.zero_grad();
    glu.gate_w.zero_grad();
    cfc.w.zero_grad();
    cfc.b.zero_grad();
    op_backward<double>(cache, probe, &glu, &cfc, gx, gy);

    fd.check(x.m, gx.m);
    fd.check(y.m, gy.m);
    if (kind == OpKind::LinearGlu) {
      fd.check(glu.value_w.w, glu.value_w.g);
      fd.check(glu.gate_w.w, glu.gate_w.g);
    }
    if (kind == OpKind::ConcatFc) {
      fd.check(cfc.w.w, cfc.w.g);
      fd.check(cfc.b.w, cfc.b.g);
    }
    CHECK(fd.max_rel_err < 1e-6);
  }
}

TEST_CASE("zero op backward leaves gradients untouched") {
  Rng rng = make_rng(3);
  TensorNcl<double> x = rand_t(2, 3, 2, rng), y = rand_t(2, 3, 2, rng);
  OpCache<double> cache;
  op_forward<double>(OpKind::Zero, x, y, nullptr, nullptr, &cache);
  TensorNcl<double> gx = TensorNcl<double>::zeros_like(x), gy = TensorNcl<double>::zeros_like(y);
  TensorNcl<double> g = rand_t(2, 3, 2, rng);
  op_backward<double>(cache, g, nullptr, nullptr, gx, gy);
  CHECK(gx.m.cwiseAbs().maxCoeff() == 0.0);
  CHECK(gy.m.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("aliased operand gradients accumulate both contributions") {
  // when both slots read the same node, gx and gy are the same buffer
  Rng rng = make_rng(5);
  TensorNcl<double> x = rand_t(2, 3, 2, rng);
  OpCache<double> cache;
  op_forward<double>(OpKind::Sum, x, x, nullptr, nullptr, &cache);
  TensorNcl<double> g(2, 3, 2);
  g.m.setOnes();
  TensorNcl<double> shared = TensorNcl<double>::zeros_like(x);
  op_backward<double>(cache, g, nullptr, nullptr, shared, shared);
  CHECK(refs::linf(shared, op_forward<double>(OpKind::Sum, g, g, nullptr, nullptr)) < 1e-14);
}

TEST_CASE("parameter counts by op kind") {
  CHECK(op_param_count(OpKind::Zero, 8) == 0);
  CHECK(op_param_count(OpKind::Sum, 8) == 0);
  CHECK(op_param_count(OpKind::Attention, 8) == 0);
  CHECK(op_param_count(OpKind::LinearGlu, 8) == 128);
  CHECK(op_param_count(OpKind::ConcatFc, 8) == 136);
}

TEST_CASE("op names round-trip") {
  for (int i = 0; i < kNumOpKinds; ++i) {
    const OpKind k = static_cast<OpKind>(i);
    CHECK(op_from_name(op_name(k)) == k);
  }
  CHECK_THROWS_AS(op_from_name("transformer"), std::invalid_argument);
}
