#pragma once

#include <Eigen/Dense>
#include <vector>

#include "aglp/tape.hpp"

// The loss terms of the composite objective that do not involve the
// prototype machinery: labeled cross-entropy, pairwise pseudo-labels with
// the adaptive clustering loss, confidence-thresholded pseudo-labeling,
// ramp-up weighted consistency, and class-centroid alignment with moving
// centroids.

namespace aglp {

// Mean over rows of -sum_k y_k log p_k. Targets may be soft; rows of
// `probs` are expected to sum to 1.
Tensor cross_entropy(const Tensor& probs, const Matrix& targets);

// s_ij = 1 iff rows i and j share the same unordered top-k coordinate
// index set. Symmetric with unit diagonal; never recorded on a tape.
Eigen::MatrixXi pairwise_pseudo_labels(const Matrix& features, int k);

// -(1/M^2) sum_ij [ s_ij log<P_i,P'_j> + (1-s_ij) log(1-<P_i,P'_j>) ],
// inner products clamped away from 0 and 1 by the shared log epsilon.
Tensor aac_loss(const Tensor& probs, const Tensor& probs_aug,
                const Eigen::MatrixXi& s);

// Cross-entropy of the second augmented view against argmax pseudo-labels
// from the raw view, restricted to rows with max confidence >= tau and
// averaged over the retained rows. The raw view is read as values only.
Tensor pl_loss(const Tensor& probs, const Tensor& probs_aug2, double tau);

// w(t) = nu * exp(-5 (1 - t/T)^2) for t in [0, T], then constant nu.
struct RampSchedule {
  double nu = 1.0;
  int total_steps = 1;

  double weight(int step) const;
};

// w * sum_j ||P'_j - P''_j||^2 / M.
Tensor consistency_loss(const Tensor& probs_a, const Tensor& probs_b,
                        double weight);

enum class Domain { kSource, kTarget };

// Per-domain, per-class moving centroids in fused-feature space.
struct CentroidState {
  Matrix source;  // K x dim
  Matrix target;
  std::vector<bool> source_seen;
  std::vector<bool> target_seen;
  double momentum = 0.7;

  CentroidState() = default;
  CentroidState(int classes, int dim, double momentum);
  int classes() const { return static_cast<int>(source.rows()); }
};

// EMA update from one batch: classes present get
// theta * previous + (1 - theta) * batch mean (first sight initializes
// directly); absent classes are untouched.
void update_centroids(CentroidState& state, const Matrix& features,
                      const std::vector<int>& labels, Domain domain);

// Sum over classes seen in both domains of ||C_S^k - C_T^k||^2.
// Returns 0 with a warning on stderr when no class is common.
double centroid_alignment(const CentroidState& state);

// Tape-resident variant used during training: the EMA blend of the
// detached previous centroids with this batch's class means is recorded,
// so the alignment gradient reaches the features. Commits the blended
// values back into `state`.
Tensor centroid_alignment_step(CentroidState& state,
                               const Tensor& source_features,
                               const std::vector<int>& source_labels,
                               const Tensor& target_features,
                               const std::vector<int>& target_labels);

}  // namespace aglp
