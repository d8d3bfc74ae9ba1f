#include "aglp/losses.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>
#include <string>

namespace aglp {

Tensor cross_entropy(const Tensor& probs, const Matrix& targets) {
  // Copy the dimensions up front: recording new nodes below may reallocate
  // the tape's storage and invalidate references into it.
  const Eigen::Index rows = probs.rows();
  const Eigen::Index cols = probs.cols();
  if (rows != targets.rows() || cols != targets.cols()) {
    throw std::invalid_argument(
        "cross_entropy: shape mismatch, predictions " + std::to_string(rows) +
        "x" + std::to_string(cols) + " vs targets " +
        std::to_string(targets.rows()) + "x" +
        std::to_string(targets.cols()));
  }
  if (rows == 0) return probs.tape()->constant(Matrix::Zero(1, 1));
  Tensor y = probs.tape()->constant(targets);
  return scale(sum_all(cwise_mul(y, log_clamped(probs))),
               -1.0 / static_cast<double>(rows));
}

Eigen::MatrixXi pairwise_pseudo_labels(const Matrix& features, int k) {
  const auto sets = top_k_index_sets(features, k);
  const int n = static_cast<int>(sets.size());
  Eigen::MatrixXi s(n, n);
  for (int i = 0; i < n; ++i) {
    s(i, i) = 1;
    for (int j = i + 1; j < n; ++j) {
      const int eq = sets[static_cast<std::size_t>(i)] ==
                             sets[static_cast<std::size_t>(j)]
                         ? 1
                         : 0;
      s(i, j) = eq;
      s(j, i) = eq;
    }
  }
  return s;
}

Tensor aac_loss(const Tensor& probs, const Tensor& probs_aug,
                const Eigen::MatrixXi& s) {
  const Eigen::Index m = probs.rows();
  if (probs_aug.rows() != m || s.rows() != m || s.cols() != m) {
    throw std::invalid_argument(
        "aac_loss: row counts disagree with similarity matrix (" +
        std::to_string(probs.rows()) + ", " +
        std::to_string(probs_aug.rows()) + ", " + std::to_string(s.rows()) +
        "x" + std::to_string(s.cols()) + ")");
  }
  Tape& tape = *probs.tape();
  if (m == 0) return tape.constant(Matrix::Zero(1, 1));

  Tensor sim = tape.constant(s.cast<double>());
  Tensor dissim = tape.constant((1 - s.array()).cast<double>().matrix());
  Tensor inner = matmul(probs, transpose(probs_aug));
  Tensor pos = cwise_mul(sim, log_clamped(inner));
  Tensor neg = cwise_mul(dissim, log_clamped(affine(inner, -1.0, 1.0)));
  return scale(sum_all(add(pos, neg)),
               -1.0 / (static_cast<double>(m) * static_cast<double>(m)));
}

Tensor pl_loss(const Tensor& probs, const Tensor& probs_aug2, double tau) {
  const Matrix p = probs.value();  // copy: the tape may reallocate below
  if (probs_aug2.rows() != p.rows() || probs_aug2.cols() != p.cols()) {
    throw std::invalid_argument("pl_loss: view shapes disagree");
  }
  if (tau <= 0.0 || tau > 1.0) {
    throw std::invalid_argument("pl_loss: tau must be in (0,1]");
  }
  Tape& tape = *probs.tape();
  if (p.rows() == 0) return tape.constant(Matrix::Zero(1, 1));

  // Pseudo-labels come from the raw view, detached from the tape.
  Matrix weights = Matrix::Zero(p.rows(), p.cols());
  int retained = 0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index best = 0;
    p.row(i).maxCoeff(&best);
    if (p(i, best) >= tau) {
      weights(i, best) = 1.0;
      ++retained;
    }
  }
  if (retained == 0) return tape.constant(Matrix::Zero(1, 1));
  weights /= static_cast<double>(retained);
  return scale(sum_all(cwise_mul(tape.constant(weights),
                                 log_clamped(probs_aug2))),
               -1.0);
}

double RampSchedule::weight(int step) const {
  if (total_steps <= 0 || step >= total_steps) return nu;
  const double t = std::max(step, 0);
  const double r = 1.0 - t / static_cast<double>(total_steps);
  return nu * std::exp(-5.0 * r * r);
}

Tensor consistency_loss(const Tensor& probs_a, const Tensor& probs_b,
                        double weight) {
  const Eigen::Index m = probs_a.rows();
  if (probs_b.rows() != m || probs_b.cols() != probs_a.cols()) {
    throw std::invalid_argument("consistency_loss: view shapes disagree");
  }
  if (m == 0) return probs_a.tape()->constant(Matrix::Zero(1, 1));
  Tensor diff = sub(probs_a, probs_b);
  return scale(sum_all(cwise_mul(diff, diff)),
               weight / static_cast<double>(m));
}

CentroidState::CentroidState(int num_classes, int dim, double theta)
    : source(Matrix::Zero(num_classes, dim)),
      target(Matrix::Zero(num_classes, dim)),
      source_seen(static_cast<std::size_t>(num_classes), false),
      target_seen(static_cast<std::size_t>(num_classes), false),
      momentum(theta) {}

namespace {

// Per-class counts and sums of the batch rows.
struct ClassMeans {
  std::vector<int> count;
  Matrix sum;
};

ClassMeans class_means(const Matrix& features, const std::vector<int>& labels,
                       int classes) {
  if (static_cast<Eigen::Index>(labels.size()) != features.rows()) {
    throw std::invalid_argument("centroids: label count " +
                                std::to_string(labels.size()) +
                                " != feature rows " +
                                std::to_string(features.rows()));
  }
  ClassMeans m;
  m.count.assign(static_cast<std::size_t>(classes), 0);
  m.sum = Matrix::Zero(classes, features.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int k = labels[i];
    if (k < 0 || k >= classes) {
      throw std::invalid_argument("centroids: label " + std::to_string(k) +
                                  " outside [0," + std::to_string(classes) +
                                  ")");
    }
    ++m.count[static_cast<std::size_t>(k)];
    m.sum.row(k) += features.row(static_cast<Eigen::Index>(i));
  }
  return m;
}

}  // namespace

void update_centroids(CentroidState& state, const Matrix& features,
                      const std::vector<int>& labels, Domain domain) {
  Matrix& centers = domain == Domain::kSource ? state.source : state.target;
  std::vector<bool>& seen =
      domain == Domain::kSource ? state.source_seen : state.target_seen;
  const auto m = class_means(features, labels, state.classes());
  for (int k = 0; k < state.classes(); ++k) {
    const int n = m.count[static_cast<std::size_t>(k)];
    if (n == 0) continue;
    const Matrix mean = m.sum.row(k) / n;
    if (seen[static_cast<std::size_t>(k)]) {
      centers.row(k) = state.momentum * centers.row(k) +
                       (1.0 - state.momentum) * mean;
    } else {
      centers.row(k) = mean;
      seen[static_cast<std::size_t>(k)] = true;
    }
  }
}

double centroid_alignment(const CentroidState& state) {
  double loss = 0.0;
  bool any = false;
  for (int k = 0; k < state.classes(); ++k) {
    if (!state.source_seen[static_cast<std::size_t>(k)] ||
        !state.target_seen[static_cast<std::size_t>(k)]) {
      continue;
    }
    any = true;
    loss += (state.source.row(k) - state.target.row(k)).squaredNorm();
  }
  if (!any) {
    std::cerr << "[aglp] centroid_alignment: no class seen in both domains, "
                 "loss is 0\n";
  }
  return loss;
}

Tensor centroid_alignment_step(CentroidState& state,
                               const Tensor& source_features,
                               const std::vector<int>& source_labels,
                               const Tensor& target_features,
                               const std::vector<int>& target_labels) {
  Tape& tape = *source_features.tape();
  const int classes = state.classes();
  const double theta = state.momentum;

  // Blend one domain's centroids on the tape; returns a handle per class
  // (or none when the class has never been observed).
  auto blend = [&](const Tensor& features, const std::vector<int>& labels,
                   Matrix& centers, std::vector<bool>& seen) {
    std::vector<std::pair<bool, Tensor>> current(
        static_cast<std::size_t>(classes), {false, Tensor{}});
    const auto m = class_means(features.value(), labels, classes);
    for (int k = 0; k < classes; ++k) {
      const std::size_t ks = static_cast<std::size_t>(k);
      const int n = m.count[ks];
      if (n == 0) {
        if (seen[ks]) current[ks] = {true, tape.constant(centers.row(k))};
        continue;
      }
      Matrix sel = Matrix::Zero(1, features.rows());
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == k) sel(0, static_cast<Eigen::Index>(i)) = 1.0 / n;
      }
      Tensor mean = matmul(tape.constant(sel), features);
      Tensor blended =
          seen[ks] ? add(scale(tape.constant(centers.row(k)), theta),
                         scale(mean, 1.0 - theta))
                   : mean;
      current[ks] = {true, blended};
    }
    // Commit the blended values as the new detached state.
    for (int k = 0; k < classes; ++k) {
      const std::size_t ks = static_cast<std::size_t>(k);
      if (m.count[ks] == 0) continue;
      centers.row(k) = current[ks].second.value();
      seen[ks] = true;
    }
    return current;
  };

  const auto src = blend(source_features, source_labels, state.source,
                         state.source_seen);
  const auto tgt = blend(target_features, target_labels, state.target,
                         state.target_seen);

  Tensor loss = tape.constant(Matrix::Zero(1, 1));
  bool any = false;
  for (int k = 0; k < classes; ++k) {
    const std::size_t ks = static_cast<std::size_t>(k);
    if (!src[ks].first || !tgt[ks].first) continue;
    any = true;
    Tensor diff = sub(src[ks].second, tgt[ks].second);
    loss = add(loss, sum_all(cwise_mul(diff, diff)));
  }
  if (!any) {
    std::cerr << "[aglp] centroid_alignment: no class seen in both domains, "
                 "loss is 0\n";
  }
  return loss;
}

}  // namespace aglp
