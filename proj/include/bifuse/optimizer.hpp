#pragma once

#include <cmath>
#include <vector>

#include "bifuse/tensor.hpp"

namespace bifuse {

// One trainable array plus its gradient accumulator.  Architecture logits
// and network weights alike are Params; optimizers work on disjoint lists
// of pointers so the two groups can be stepped independently.
template <typename S>
struct Param {
  MatrixX<S> w;
  MatrixX<S> g;

  Param() = default;
  Param(Eigen::Index rows, Eigen::Index cols) { resize(rows, cols); }

  void resize(Eigen::Index rows, Eigen::Index cols) {
    w.setZero(rows, cols);
    g.setZero(rows, cols);
  }
  void zero_grad() { g.setZero(); }

  // Symmetric uniform fan-in init for affine weights acting on `fan_in`
  // input channels.
  void init_fan_in(Rng& rng, Eigen::Index fan_in) {
    S bound = S(1) / std::sqrt(S(fan_in));
    std::uniform_real_distribution<double> d(-double(bound), double(bound));
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<S>(d(rng));
  }

  // Architecture logits start at zero plus small noise so softmaxes are
  // near-uniform but ties are broken.
  void init_logit_noise(Rng& rng, S scale) {
    std::normal_distribution<double> d(0.0, double(scale));
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<S>(d(rng));
  }
};

template <typename S>
void zero_grads(const std::vector<Param<S>*>& ps) {
  for (auto* p : ps) p->zero_grad();
}

// Adam with optional L2 regularization folded into the gradient.
template <typename S>
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  AdamOptimizer(std::vector<Param<S>*> params, S lr, S l2 = S(0), S beta1 = S(0.9),
                S beta2 = S(0.999), S eps = S(1e-8))
      : params_(std::move(params)), lr_(lr), l2_(l2), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (auto* p : params_) {
      m_.push_back(MatrixX<S>::Zero(p->w.rows(), p->w.cols()));
      v_.push_back(MatrixX<S>::Zero(p->w.rows(), p->w.cols()));
    }
  }

  void set_lr(S lr) { lr_ = lr; }
  S lr() const { return lr_; }
  long step_count() const { return t_; }

  void step() {
    ++t_;
    const S bc1 = S(1) - std::pow(beta1_, S(t_));
    const S bc2 = S(1) - std::pow(beta2_, S(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Param<S>& p = *params_[i];
      MatrixX<S> g = p.g;
      if (l2_ != S(0)) g += l2_ * p.w;
      m_[i] = beta1_ * m_[i] + (S(1) - beta1_) * g;
      v_[i] = beta2_ * v_[i] + (S(1) - beta2_) * g.array().square().matrix();
      p.w.array() -=
          lr_ * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + eps_);
    }
  }

  // Moment buffers, exposed for checkpointing.
  std::vector<MatrixX<S>>& moments1() { return m_; }
  std::vector<MatrixX<S>>& moments2() { return v_; }
  long& step_count_ref() { return t_; }

 private:
  std::vector<Param<S>*> params_;
  S lr_ = S(1e-3);
  S l2_ = S(0);
  S beta1_ = S(0.9), beta2_ = S(0.999), eps_ = S(1e-8);
  long t_ = 0;
  std::vector<MatrixX<S>> m_, v_;
};

// Cosine-annealed learning rate: starts at max_lr for epoch 0 and reaches
// min_lr at epoch == total_epochs.
template <typename S>
S cosine_lr(S max_lr, S min_lr, int epoch, int total_epochs) {
  require(total_epochs >= 1, "cosine_lr: total_epochs must be >= 1");
  require(epoch >= 0 && epoch <= total_epochs, "cosine_lr: epoch out of range");
  const S pi = S(3.14159265358979323846);
  return min_lr + S(0.5) * (max_lr - min_lr) * (S(1) + std::cos(pi * S(epoch) / S(total_epochs)));
}

}  // namespace bifuse
