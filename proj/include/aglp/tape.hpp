#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

// Reverse-mode automatic differentiation over dense double matrices.
// A Tape records operations as they are built; backward() walks the
// recorded nodes once, in reverse, and accumulates gradients into the
// requires-grad leaves. Rank-1 data travels as n x 1 or 1 x n matrices,
// scalars as 1 x 1.

namespace aglp {

using Matrix = Eigen::MatrixXd;

class Tape;

// Lightweight handle into the active tape.
class Tensor {
 public:
  Tensor() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;
  int id() const { return id_; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf that never accumulates gradient.
  Tensor constant(Matrix value);
  // Trainable leaf; receives dLoss/dLeaf after backward().
  Tensor parameter(Matrix value);

  const Matrix& value(const Tensor& t) const { return nodes_[t.id_].value; }
  bool requires_grad(const Tensor& t) const {
    return nodes_[t.id_].requires_grad;
  }

  // loss must be scalar (1 x 1). Fills gradients for every node; leaves
  // not reachable from loss keep a zero gradient.
  void backward(const Tensor& loss);

  // Valid after backward(); zero matrix for unreachable nodes.
  const Matrix& grad(const Tensor& t) const { return nodes_[t.id_].grad; }

  std::size_t size() const { return nodes_.size(); }

  // --- recording machinery (used by the free-function ops) ---
  // pull reads grad(out) and adds the chain-rule contribution into the
  // gradients of the op's inputs.
  using PullFn = std::function<void(Tape&, int out_id)>;
  Tensor record(Matrix value, bool requires_grad, PullFn pull);
  Matrix& grad_ref(int id) { return nodes_[id].grad; }
  const Matrix& value_of(int id) const { return nodes_[id].value; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    PullFn pull;  // empty for leaves and detached outputs
  };
  std::vector<Node> nodes_;
};

inline const Matrix& Tensor::value() const { return tape_->value(*this); }
inline bool Tensor::requires_grad() const { return tape_->requires_grad(*this); }

// Clamp floor shared by every logarithm on the tape.
inline constexpr double kLogEps = 1e-12;

// --- recorded primitives ---

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor cwise_mul(const Tensor& a, const Tensor& b);

// m * a + c, elementwise.
Tensor affine(const Tensor& a, double m, double c);
Tensor scale(const Tensor& a, double s);

Tensor exp_elem(const Tensor& a);
// log(max(a, kLogEps)); zero gradient inside the clamped region.
Tensor log_clamped(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
// x^{-1/2}; caller guarantees strictly positive input.
Tensor rsqrt(const Tensor& a);

Tensor row_sum(const Tensor& a);   // n x m -> n x 1
Tensor col_sum(const Tensor& a);   // n x m -> 1 x m
Tensor sum_all(const Tensor& a);   // -> 1 x 1
Tensor mean_all(const Tensor& a);  // -> 1 x 1

// Row-wise softmax with max subtraction.
Tensor softmax_rows(const Tensor& a);

// D_ik = ||x_i - c_k||^2 for row sets x (n x d) and c (k x d).
Tensor pairwise_sqdist(const Tensor& x, const Tensor& c);

Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor rows(const Tensor& a, Eigen::Index start, Eigen::Index count);

// out_ij = a_ij * v_i (v is n x 1) / out_ij = a_ij * v_j (v is m x 1).
Tensor scale_rows(const Tensor& a, const Tensor& v);
Tensor scale_cols(const Tensor& a, const Tensor& v);

// Broadcast a 1 x m row vector onto every row of a.
Tensor add_row_vector(const Tensor& a, const Tensor& b);

// Elementwise product with a fixed mask (dropout application).
Tensor apply_mask(const Tensor& a, const Matrix& mask);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

// Top-k coordinate index set of each row, as a sorted index list.
// Ties broken by lowest index. Not recorded on any tape.
std::vector<std::vector<int>> top_k_index_sets(const Matrix& x, int k);

}  // namespace aglp
