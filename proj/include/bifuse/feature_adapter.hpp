#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "bifuse/optimizer.hpp"
#include "bifuse/tensor.hpp"

namespace bifuse {

enum class AxisRole : int { Batch = 0, Channel = 1, Temporal = 2, Spatial = 3 };

inline const char* axis_role_name(AxisRole r) {
  switch (r) {
    case AxisRole::Batch: return "batch";
    case AxisRole::Channel: return "channel";
    case AxisRole::Temporal: return "temporal";
    case AxisRole::Spatial: return "spatial";
  }
  throw std::invalid_argument("axis_role_name: unknown AxisRole");
}

inline AxisRole axis_role_from_name(const std::string& s) {
  for (int i = 0; i < 4; ++i)
    if (s == axis_role_name(static_cast<AxisRole>(i))) return static_cast<AxisRole>(i);
  throw std::invalid_argument("axis_role_from_name: unknown axis role \"" + s + "\"");
}

// Extractor output as it arrives from upstream: a dense row-major array of
// rank 2-5 with a leading batch axis and a role tag per axis.
template <typename S>
struct RawFeature {
  std::vector<Eigen::Index> dims;
  std::vector<AxisRole> roles;
  std::vector<S> data;  // row-major, dims product elements

  Eigen::Index size() const {
    return std::accumulate(dims.begin(), dims.end(), Eigen::Index(1),
                           [](Eigen::Index a, Eigen::Index b) { return a * b; });
  }
};

template <typename S>
void validate_raw_feature(const RawFeature<S>& f) {
  require(f.dims.size() >= 2 && f.dims.size() <= 5,
          "raw feature: rank must be between 2 and 5");
  require(f.roles.size() == f.dims.size(), "raw feature: one axis role per axis required");
  for (Eigen::Index d : f.dims) require(d >= 1, "raw feature: all dimensions must be >= 1");
  require(f.roles[0] == AxisRole::Batch, "raw feature: leading axis must be the batch axis");
  int batches = 0, channels = 0, temporals = 0;
  for (AxisRole r : f.roles) {
    if (r == AxisRole::Batch) ++batches;
    if (r == AxisRole::Channel) ++channels;
    if (r == AxisRole::Temporal) ++temporals;
  }
  require(batches == 1, "raw feature: exactly one batch axis required");
  require(channels == 1, "raw feature: no identifiable channel axis");
  require(temporals <= 1, "raw feature: at most one temporal axis allowed");
  require(static_cast<Eigen::Index>(f.data.size()) == f.size(),
          "raw feature: data size does not match dimensions");
  for (const S& v : f.data)
    if (!std::isfinite(static_cast<double>(v)))
      throw std::invalid_argument("raw feature: non-finite input value");
}

// Interpolation matrix mapping a length-`from` series to length `to` by
// linear interpolation with endpoint alignment; from == to yields the
// identity.  Applied per sample as series * P.
template <typename S>
MatrixX<S> interp_matrix(Eigen::Index from, Eigen::Index to) {
  MatrixX<S> p = MatrixX<S>::Zero(from, to);
  for (Eigen::Index j = 0; j < to; ++j) {
    double pos = (to == 1 || from == 1)
                     ? 0.0
                     : double(j) * double(from - 1) / double(to - 1);
    Eigen::Index i0 = static_cast<Eigen::Index>(std::floor(pos));
    Eigen::Index i1 = std::min(i0 + 1, from - 1);
    S w = static_cast<S>(pos - double(i0));
    p(i0, j) += S(1) - w;
    p(i1, j) += w;
  }
  return p;
}

// Deterministic front half of the adapter: mean-pool every spatial axis,
// then linearly interpolate the temporal axis (a length-1 one is created
// when absent) to target_l.  Returns raw_channels x (batch * target_l),
// laid out like TensorNcl.
template <typename S>
MatrixX<S> pool_and_interp(const RawFeature<S>& f, int target_l) {
  validate_raw_feature(f);
  require(target_l >= 1, "pool_and_interp: target_l must be >= 1");
  const std::size_t rank = f.dims.size();
  int channel_axis = -1, temporal_axis = -1;
  for (std::size_t a = 0; a < rank; ++a) {
    if (f.roles[a] == AxisRole::Channel) channel_axis = static_cast<int>(a);
    if (f.roles[a] == AxisRole::Temporal) temporal_axis = static_cast<int>(a);
  }
  const Eigen::Index n = f.dims[0];
  const Eigen::Index c = f.dims[static_cast<std::size_t>(channel_axis)];
  const Eigen::Index t =
      temporal_axis >= 0 ? f.dims[static_cast<std::size_t>(temporal_axis)] : 1;

  std::vector<Eigen::Index> stride(rank);
  stride[rank - 1] = 1;
  for (std::size_t a = rank - 1; a > 0; --a) stride[a - 1] = stride[a] * f.dims[a];

  // accumulate the spatial mean into (n, c, t) buckets
  MatrixX<S> pooled = MatrixX<S>::Zero(c, n * t);
  const Eigen::Index total = f.size();
  const S spatial_count = S(total) / S(n * c * t);
  for (Eigen::Index i = 0; i < total; ++i) {
    const Eigen::Index ni = i / stride[0];
    const Eigen::Index ci = (i / stride[static_cast<std::size_t>(channel_axis)]) % c;
    const Eigen::Index ti =
        temporal_axis >= 0 ? (i / stride[static_cast<std::size_t>(temporal_axis)]) % t : 0;
    pooled(ci, ni * t + ti) += f.data[static_cast<std::size_t>(i)] / spatial_count;
  }

  MatrixX<S> p = interp_matrix<S>(t, target_l);
  MatrixX<S> out(c, n * target_l);
  for (Eigen::Index s = 0; s < n; ++s)
    out.middleCols(s * target_l, target_l) = pooled.middleCols(s * t, t) * p;
  return out;
}

// Trainable back half: affine map on the channel axis from the raw channel
// count to the fusion width.  One private instance per (feature, target).
template <typename S>
struct Adapter {
  Param<S> w;  // target_c x raw_c
  Param<S> b;  // target_c x 1

  void init(int target_c, int raw_c, Rng& rng) {
    w.resize(target_c, raw_c);
    b.resize(target_c, 1);
    w.init_fan_in(rng, raw_c);
  }

  // `prepared` is pool_and_interp output: raw_c x (batch * target_l).
  TensorNcl<S> forward(const MatrixX<S>& prepared, int batch, int target_l) const {
    require(prepared.rows() == w.w.cols(), "adapter: raw channel count mismatch");
    require(prepared.cols() == Eigen::Index(batch) * target_l,
            "adapter: prepared column count does not match batch * target_l");
    TensorNcl<S> out(batch, static_cast<int>(w.w.rows()), target_l);
    out.m = w.w * prepared;
    out.m.colwise() += VectorX<S>(b.w.col(0));
    return out;
  }

  void backward(const MatrixX<S>& prepared, const TensorNcl<S>& grad_out) {
    w.g += grad_out.m * prepared.transpose();
    b.g += grad_out.m.rowwise().sum();
  }

  long count() const { return w.w.size() + b.w.size(); }
};

// Full adapter pipeline on one raw feature: pool spatial axes, interpolate
// the temporal axis to target_l, then map channels to target_c.
template <typename S>
TensorNcl<S> reshape_feature(const RawFeature<S>& f, const Adapter<S>& adapter, int target_l) {
  MatrixX<S> prepared = pool_and_interp(f, target_l);
  require(prepared.rows() == adapter.w.w.cols(),
          "reshape_feature: adapter raw channel count does not match feature");
  const int batch = static_cast<int>(f.dims[0]);
  return adapter.forward(prepared, batch, target_l);
}

}  // namespace bifuse
