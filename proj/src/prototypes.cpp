#include "aglp/prototypes.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "aglp/losses.hpp"

namespace aglp {

namespace {

struct Sums {
  Matrix sum;
  std::vector<int> count;
};

Sums per_class_sums(const Matrix& features, const std::vector<int>& labels,
                    int classes) {
  if (static_cast<Eigen::Index>(labels.size()) != features.rows()) {
    throw std::invalid_argument("prototypes: label count " +
                                std::to_string(labels.size()) +
                                " != feature rows " +
                                std::to_string(features.rows()));
  }
  Sums s;
  s.sum = Matrix::Zero(classes, features.cols());
  s.count.assign(static_cast<std::size_t>(classes), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int k = labels[i];
    if (k < 0 || k >= classes) {
      throw std::invalid_argument("prototypes: label " + std::to_string(k) +
                                  " outside [0," + std::to_string(classes) +
                                  ")");
    }
    s.sum.row(k) += features.row(static_cast<Eigen::Index>(i));
    ++s.count[static_cast<std::size_t>(k)];
  }
  return s;
}

}  // namespace

PrototypeSet compute_prototypes(const Matrix& features,
                                const std::vector<int>& labels, int classes,
                                double temperature) {
  if (temperature <= 0.0) {
    throw std::invalid_argument("prototypes: temperature must be > 0");
  }
  const auto s = per_class_sums(features, labels, classes);
  std::string missing;
  for (int k = 0; k < classes; ++k) {
    if (s.count[static_cast<std::size_t>(k)] == 0) {
      if (!missing.empty()) missing += ", ";
      missing += std::to_string(k);
    }
  }
  if (!missing.empty()) {
    throw std::invalid_argument(
        "compute_prototypes: classes without examples: " + missing);
  }
  PrototypeSet set;
  set.centers = s.sum;
  for (int k = 0; k < classes; ++k) {
    set.centers.row(k) /= s.count[static_cast<std::size_t>(k)];
  }
  set.temperature = temperature;
  return set;
}

PrototypeSet update_prototypes(const PrototypeSet& previous,
                               const Matrix& features,
                               const std::vector<int>& labels) {
  const auto s = per_class_sums(features, labels, previous.classes());
  PrototypeSet set = previous;
  for (int k = 0; k < previous.classes(); ++k) {
    const int n = s.count[static_cast<std::size_t>(k)];
    if (n > 0) set.centers.row(k) = s.sum.row(k) / n;
  }
  return set;
}

Matrix protonet_predict(const PrototypeSet& set, const Matrix& features) {
  if (features.cols() != set.centers.cols()) {
    throw std::invalid_argument(
        "protonet_predict: feature dimension " +
        std::to_string(features.cols()) + " != prototype dimension " +
        std::to_string(set.centers.cols()));
  }
  Matrix probs(features.rows(), set.classes());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    Eigen::ArrayXd logit(set.classes());
    for (int k = 0; k < set.classes(); ++k) {
      logit(k) = -(features.row(i) - set.centers.row(k)).squaredNorm() *
                 set.temperature;
    }
    Eigen::ArrayXd e = (logit - logit.maxCoeff()).exp();
    probs.row(i) = (e / e.sum()).matrix().transpose();
  }
  return probs;
}

std::vector<int> pseudo_label(const Matrix& probs) {
  if (probs.cols() < 1) {
    throw std::invalid_argument("pseudo_label: rows must be nonempty");
  }
  std::vector<int> labels(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index best = 0;
    probs.row(i).maxCoeff(&best);  // Eigen keeps the first maximum
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return labels;
}

Matrix adapt_source_labels(const Matrix& labels, const Matrix& proto_probs,
                           double alpha) {
  if (labels.rows() != proto_probs.rows() ||
      labels.cols() != proto_probs.cols()) {
    throw std::invalid_argument("adapt_source_labels: shapes disagree");
  }
  if (alpha < 0.0 || alpha > 1.0) {
    throw std::invalid_argument("adapt_source_labels: alpha must be in [0,1]");
  }
  return (1.0 - alpha) * labels + alpha * proto_probs;
}

Tensor adapted_source_loss(const Tensor& probs,
                           const Matrix& adapted_labels) {
  return cross_entropy(probs, adapted_labels);
}

}  // namespace aglp
