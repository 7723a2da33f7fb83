#pragma once

#include <Eigen/Dense>

#include "bifuse/common.hpp"

namespace bifuse {

// Fraction of samples whose argmax logit matches the label.  Ties resolve
// to the lowest class index so the metric is deterministic.
template <typename S>
double accuracy(const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>& logits,
                const Eigen::VectorXi& labels) {
  require(logits.cols() == labels.size(), "accuracy: label count != batch");
  require(logits.cols() > 0, "accuracy: empty batch");
  int correct = 0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    int best = 0;
    for (Eigen::Index i = 1; i < logits.rows(); ++i)
      if (logits(i, j) > logits(best, j)) best = static_cast<int>(i);
    if (best == labels(j)) ++correct;
  }
  return double(correct) / double(logits.cols());
}

// Support-weighted one-vs-rest F1 over boolean class masks (n_classes x
// n_samples).  Classes with zero support contribute zero weight; a class
// with no predicted or true positives scores zero F1.
inline double weighted_f1(const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& truth,
                          const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& pred) {
  require(truth.rows() == pred.rows() && truth.cols() == pred.cols(),
          "weighted_f1: truth/prediction shape mismatch");
  require(truth.cols() > 0 && truth.rows() > 0, "weighted_f1: empty input");
  double weighted_sum = 0.0;
  long total_support = 0;
  for (Eigen::Index c = 0; c < truth.rows(); ++c) {
    long tp = 0, fp = 0, fn = 0;
    for (Eigen::Index j = 0; j < truth.cols(); ++j) {
      if (pred(c, j) && truth(c, j)) ++tp;
      if (pred(c, j) && !truth(c, j)) ++fp;
      if (!pred(c, j) && truth(c, j)) ++fn;
    }
    const long support = tp + fn;
    double f1 = 0.0;
    if (tp > 0) {
      double precision = double(tp) / double(tp + fp);
      double recall = double(tp) / double(tp + fn);
      f1 = 2.0 * precision * recall / (precision + recall);
    }
    weighted_sum += double(support) * f1;
    total_support += support;
  }
  return total_support == 0 ? 0.0 : weighted_sum / double(total_support);
}

// Weighted F1 of multiclass predictions via one-hot masks.
template <typename S>
double weighted_f1_multiclass(const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>& logits,
                              const Eigen::VectorXi& labels) {
  require(logits.cols() == labels.size(), "weighted_f1_multiclass: label count != batch");
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> truth(logits.rows(), logits.cols());
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> pred(logits.rows(), logits.cols());
  truth.setConstant(false);
  pred.setConstant(false);
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    require(labels(j) >= 0 && labels(j) < logits.rows(),
            "weighted_f1_multiclass: label out of range");
    truth(labels(j), j) = true;
    int best = 0;
    for (Eigen::Index i = 1; i < logits.rows(); ++i)
      if (logits(i, j) > logits(best, j)) best = static_cast<int>(i);
    pred(best, j) = true;
  }
  return weighted_f1(truth, pred);
}

// Weighted F1 of multilabel predictions: sigmoid(logit) > 0.5, i.e.
// logit > 0.
template <typename S>
double weighted_f1_multilabel(const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>& logits,
                              const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>& targets) {
  require(logits.rows() == targets.rows() && logits.cols() == targets.cols(),
          "weighted_f1_multilabel: logits/targets shape mismatch");
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> truth =
      (targets.array() > S(0.5)).matrix();
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> pred = (logits.array() > S(0)).matrix();
  return weighted_f1(truth, pred);
}

}  // namespace bifuse
