#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "bifuse/feature_adapter.hpp"
#include "oracles.hpp"

using namespace bifuse;

namespace {

RawFeature<double> make_raw(std::vector<Eigen::Index> dims, std::vector<AxisRole> roles,
                            Rng& rng) {
  RawFeature<double> f;
  f.dims = std::move(dims);
  f.roles = std::move(roles);
  f.data.resize(static_cast<std::size_t>(f.size()));
  std::normal_distribution<double> d(0.0, 1.0);
  for (auto& v : f.data) v = d(rng);
  return f;
}

// independent pooled/interpolated reference with plain index arithmetic
refs::Mat pool_interp_ref(const RawFeature<double>& f, int target_l) {
  const std::size_t rank = f.dims.size();
  int ca = -1, ta = -1;
  for (std::size_t a = 0; a < rank; ++a) {
    if (f.roles[a] == AxisRole::Channel) ca = static_cast<int>(a);
    if (f.roles[a] == AxisRole::Temporal) ta = static_cast<int>(a);
  }
  const Eigen::Index n = f.dims[0];
  const Eigen::Index c = f.dims[static_cast<std::size_t>(ca)];
  const Eigen::Index t = ta >= 0 ? f.dims[static_cast<std::size_t>(ta)] : 1;

  // spatial mean per (n, c, t) by walking every element with odometer indices
  refs::Mat pooled = refs::Mat::Zero(c, n * t);
  std::vector<Eigen::Index> idx(rank, 0);
  const double spatial = double(f.size()) / double(n * c * t);
  for (std::size_t flat = 0; flat < f.data.size(); ++flat) {
    const Eigen::Index ti = ta >= 0 ? idx[static_cast<std::size_t>(ta)] : 0;
    pooled(idx[static_cast<std::size_t>(ca)], idx[0] * t + ti) +=
        f.data[flat] / spatial;
    for (std::size_t a = rank; a-- > 0;) {
      if (++idx[a] < f.dims[a]) break;
      idx[a] = 0;
    }
  }

  // linear interpolation with endpoint alignment, one sample at a time
  refs::Mat out(c, n * target_l);
  for (Eigen::Index s = 0; s < n; ++s)
    for (int j = 0; j < target_l; ++j) {
      double pos = (target_l == 1 || t == 1) ? 0.0
                                             : double(j) * double(t - 1) / double(target_l - 1);
      Eigen::Index i0 = static_cast<Eigen::Index>(std::floor(pos));
      Eigen::Index i1 = std::min(i0 + 1, t - 1);
      double w = pos - double(i0);
      out.col(s * target_l + j) =
          (1.0 - w) * pooled.col(s * t + i0) + w * pooled.col(s * t + i1);
    }
  return out;
}

}  // namespace

TEST_CASE("spatial axes mean-pool on a worked video-style block") {
  // one sample, 2 channels, 2x2 spatial grid
  RawFeature<double> f;
  f.dims = {1, 2, 2, 2};
  f.roles = {AxisRole::Batch, AxisRole::Channel, AxisRole::Spatial, AxisRole::Spatial};
  f.data = {1, 2, 3, 4, 10, 20, 30, 40};  // channel 0 then channel 1, row-major grids
  refs::Mat out = pool_and_interp(f, 3);
  CHECK(out.rows() == 2);
  CHECK(out.cols() == 3);  // no temporal axis: the pooled value is replicated
  for (int j = 0; j < 3; ++j) {
    CHECK(out(0, j) == doctest::Approx(2.5));
    CHECK(out(1, j) == doctest::Approx(25.0));
  }
}

TEST_CASE("temporal interpolation on worked series") {
  RawFeature<double> f;
  f.dims = {1, 1, 3};
  f.roles = {AxisRole::Batch, AxisRole::Channel, AxisRole::Temporal};
  f.data = {1.0, 2.0, 4.0};

  SUBCASE("upsampling 3 -> 5 hits endpoints and midpoints") {
    refs::Mat out = pool_and_interp(f, 5);
    const double expect[5] = {1.0, 1.5, 2.0, 3.0, 4.0};
    for (int j = 0; j < 5; ++j) CHECK(out(0, j) == doctest::Approx(expect[j]));
  }
  SUBCASE("downsampling 3 -> 2 keeps both endpoints") {
    refs::Mat out = pool_and_interp(f, 2);
    CHECK(out(0, 0) == doctest::Approx(1.0));
    CHECK(out(0, 1) == doctest::Approx(4.0));
  }
  SUBCASE("target length 1 takes the first position") {
    refs::Mat out = pool_and_interp(f, 1);
    CHECK(out(0, 0) == doctest::Approx(1.0));
  }
  SUBCASE("equal lengths are the identity") {
    refs::Mat out = pool_and_interp(f, 3);
    CHECK(out(0, 0) == doctest::Approx(1.0));
    CHECK(out(0, 1) == doctest::Approx(2.0));
    CHECK(out(0, 2) == doctest::Approx(4.0));
  }
}

TEST_CASE("pooling and interpolation match the reference on every rank") {
  Rng rng = make_rng(99);
  std::vector<RawFeature<double>> cases;
  cases.push_back(make_raw({3, 4}, {AxisRole::Batch, AxisRole::Channel}, rng));
  cases.push_back(make_raw({3, 4, 5}, {AxisRole::Batch, AxisRole::Channel, AxisRole::Temporal},
                           rng));
  cases.push_back(make_raw({2, 6, 3, 4},
                           {AxisRole::Batch, AxisRole::Temporal, AxisRole::Channel,
                            AxisRole::Spatial},
                           rng));
  cases.push_back(make_raw({2, 3, 4, 2, 2},
                           {AxisRole::Batch, AxisRole::Channel, AxisRole::Temporal,
                            AxisRole::Spatial, AxisRole::Spatial},
                           rng));
  for (const auto& f : cases) {
    for (int target_l : {1, 2, 4}) {
      refs::Mat got = pool_and_interp(f, target_l);
      refs::Mat want = pool_interp_ref(f, target_l);
      CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("malformed raw features are rejected") {
  Rng rng = make_rng(1);
  RawFeature<double> ok = make_raw({2, 3}, {AxisRole::Batch, AxisRole::Channel}, rng);
  CHECK_NOTHROW(validate_raw_feature(ok));

  RawFeature<double> no_channel = ok;
  no_channel.roles[1] = AxisRole::Spatial;
  CHECK_THROWS_WITH_AS(validate_raw_feature(no_channel),
                       "raw feature: no identifiable channel axis", std::invalid_argument);

  RawFeature<double> two_temporal =
      make_raw({2, 3, 2, 2},
               {AxisRole::Batch, AxisRole::Channel, AxisRole::Temporal, AxisRole::Temporal},
               rng);
  CHECK_THROWS_AS(validate_raw_feature(two_temporal), std::invalid_argument);

  RawFeature<double> batch_later =
      make_raw({2, 3}, {AxisRole::Channel, AxisRole::Batch}, rng);
  CHECK_THROWS_AS(validate_raw_feature(batch_later), std::invalid_argument);

  RawFeature<double> short_data = ok;
  short_data.data.pop_back();
  CHECK_THROWS_AS(validate_raw_feature(short_data), std::invalid_argument);

  RawFeature<double> non_finite = ok;
  non_finite.data[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(validate_raw_feature(non_finite), std::invalid_argument);

  RawFeature<double> rank1;
  rank1.dims = {4};
  rank1.roles = {AxisRole::Batch};
  rank1.data = {1, 2, 3, 4};
  CHECK_THROWS_AS(validate_raw_feature(rank1), std::invalid_argument);
}

TEST_CASE("adapter affine gradient agrees with finite differences") {
  Rng rng = make_rng(21);
  RawFeature<double> f =
      make_raw({3, 5, 4}, {AxisRole::Batch, AxisRole::Channel, AxisRole::Temporal}, rng);
  const int target_c = 4, target_l = 2;
  Adapter<double> adapter;
  adapter.init(target_c, 5, rng);
  adapter.b.init_logit_noise(rng, 0.2);
  refs::Mat prepared = pool_and_interp(f, target_l);
  TensorNcl<double> probe = random_tensor<double>(3, target_c, target_l, rng);

  refs::FdChecker fd;
  fd.loss = [&]() {
    TensorNcl<double> out = adapter.forward(prepared, 3, target_l);
    return (out.m.array() * probe.m.array()).sum();
  };
  adapter.w.zero_grad();
  adapter.b.zero_grad();
  adapter.backward(prepared, probe);
  fd.check(adapter.w.w, adapter.w.g);
  fd.check(adapter.b.w, adapter.b.g);
  CHECK(fd.max_rel_err < 1e-6);
}

TEST_CASE("adapter rejects mismatched shapes") {
  Rng rng = make_rng(2);
  Adapter<double> adapter;
  adapter.init(4, 5, rng);
  refs::Mat wrong_rows = refs::Mat::Zero(6, 8);
  CHECK_THROWS_AS(adapter.forward(wrong_rows, 4, 2), std::invalid_argument);
  refs::Mat wrong_cols = refs::Mat::Zero(5, 7);
  CHECK_THROWS_AS(adapter.forward(wrong_cols, 4, 2), std::invalid_argument);
}
