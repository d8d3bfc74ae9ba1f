#pragma once

#include <Eigen/Dense>
#include <vector>

#include "aglp/tape.hpp"

// Prototype machinery for source label adaptation: per-class mean centers,
// the prototypical classifier (softmax over negative scaled squared
// distances), pseudo-labels, convex label mixing, and the soft-target
// source loss.

namespace aglp {

struct PrototypeSet {
  Matrix centers;  // K x dim
  double temperature = 0.6;

  int classes() const { return static_cast<int>(centers.rows()); }
  int dim() const { return static_cast<int>(centers.cols()); }
};

// c_k = mean of class-k rows. Throws listing the missing classes if any
// class in [0,K) has no example.
PrototypeSet compute_prototypes(const Matrix& features,
                                const std::vector<int>& labels, int classes,
                                double temperature);

// Like compute_prototypes, but classes absent from this batch keep their
// center from `previous` (early training can starve classes).
PrototypeSet update_prototypes(const PrototypeSet& previous,
                               const Matrix& features,
                               const std::vector<int>& labels);

// softmax_k over -||f(x_i) - c_k||^2 * T, computed with max subtraction.
Matrix protonet_predict(const PrototypeSet& set, const Matrix& features);

// Argmax per row, ties broken by lowest class index.
std::vector<int> pseudo_label(const Matrix& probs);

// (1 - alpha) * y + alpha * p, rows stay on the probability simplex.
Matrix adapt_source_labels(const Matrix& labels, const Matrix& proto_probs,
                           double alpha);

// Mean soft-target cross-entropy of source predictions against adapted
// labels (same contract as cross_entropy; named for its role).
Tensor adapted_source_loss(const Tensor& probs, const Matrix& adapted_labels);

}  // namespace aglp
