#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "aglp/tape.hpp"

// Seeded synthetic SSDA problems: a labeled source domain, a sparsely
// labeled target domain, an unlabeled target pool, plus held-out test
// splits for both domains. The target domain is the source distribution
// rotated in the first two coordinates and translated.

namespace aglp {

struct DatasetParams {
  int classes = 4;
  int dim = 2;
  int n_source = 400;
  int n_target = 400;  // labeled + unlabeled target pool
  int n_test = 400;    // per-domain held-out test size
  int shots = 3;       // labeled target examples per class
  double shift = 1.5;          // translation magnitude along e0
  double rotation_deg = 30.0;  // rotation in the (x0, x1) plane
  double cluster_stddev = 0.5;
  double radius = 2.0;  // class means sit on a circle of this radius
};

struct SsdaDataset {
  Matrix source_x;  // one example per row
  std::vector<int> source_y;
  Matrix labeled_x;  // |L| = shots * classes
  std::vector<int> labeled_y;
  Matrix unlabeled_x;  // labels withheld from training
  Matrix source_test_x;
  std::vector<int> source_test_y;
  Matrix target_test_x;
  std::vector<int> target_test_y;
  int classes = 0;
  int dim = 0;
  std::uint64_t seed = 0;

  int labeled_count() const { return static_cast<int>(labeled_x.rows()); }
  int unlabeled_count() const { return static_cast<int>(unlabeled_x.rows()); }
};

SsdaDataset make_gaussian_shift(const DatasetParams& params,
                                std::uint64_t seed);

struct AugmentParams {
  double strength = 0.1;  // stddev of additive Gaussian jitter
  double scale_lo = 0.9;  // per-coordinate multiplicative jitter range
  double scale_hi = 1.1;
};

Eigen::VectorXd augment(const Eigen::VectorXd& x, const AugmentParams& params,
                        std::mt19937_64& rng);

struct Batch {
  Matrix source_x;
  Matrix source_y;  // one-hot rows
  Matrix labeled_x;
  Matrix labeled_y;  // one-hot rows
  Matrix unlabeled_x;   // raw view x^u
  Matrix unlabeled_v1;  // first augmented view x'
  Matrix unlabeled_v2;  // second augmented view x''
  std::vector<int> source_labels;
  std::vector<int> labeled_labels;

  int source_count() const { return static_cast<int>(source_x.rows()); }
  int labeled_count() const { return static_cast<int>(labeled_x.rows()); }
  int unlabeled_count() const { return static_cast<int>(unlabeled_x.rows()); }
};

// Uniform sampling without replacement within one step; the two unlabeled
// views come from independent augmentation draws of the same rows.
Batch sample_batch(const SsdaDataset& data, int m_source, int m_labeled,
                   int m_unlabeled, const AugmentParams& aug,
                   std::mt19937_64& rng);

Matrix one_hot(const std::vector<int>& labels, int classes);

// CSV layout: split,label,f0,...,f{d-1}. Unlabeled rows carry label -1;
// every other split keeps its label.
void save_dataset_csv(const SsdaDataset& data, const std::string& path);
SsdaDataset load_dataset_csv(const std::string& path);

}  // namespace aglp
