#include "aglp/tape.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace aglp {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a) + " vs " + shape_str(b));
  }
}

}  // namespace

Tensor Tape::constant(Matrix value) {
  return record(std::move(value), false, nullptr);
}

Tensor Tape::parameter(Matrix value) {
  return record(std::move(value), true, nullptr);
}

Tensor Tape::record(Matrix value, bool requires_grad, PullFn pull) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.pull = std::move(pull);
  nodes_.push_back(std::move(node));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape() != this) {
    throw std::invalid_argument("backward: tensor belongs to another tape");
  }
  const Matrix& lv = nodes_[loss.id()].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " +
                                shape_str(lv));
  }
  for (Node& n : nodes_) {
    n.grad.setZero(n.value.rows(), n.value.cols());
  }
  nodes_[loss.id()].grad(0, 0) = 1.0;
  for (int i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.pull) n.pull(*this, i);
  }
  // Pulls write into every input's buffer; constants must come out clean.
  for (Node& n : nodes_) {
    if (!n.requires_grad) n.grad.setZero();
  }
}

namespace {

Tensor unary(const Tensor& a, Matrix value,
             std::function<void(Tape&, int, int)> pull) {
  Tape& tape = *a.tape();
  const bool rg = a.requires_grad();
  const int aid = a.id();
  Tape::PullFn fn;
  if (rg) {
    fn = [aid, pull = std::move(pull)](Tape& t, int out) { pull(t, out, aid); };
  }
  return tape.record(std::move(value), rg, std::move(fn));
}

Tensor binary(const Tensor& a, const Tensor& b, Matrix value,
              std::function<void(Tape&, int, int, int)> pull) {
  if (a.tape() != b.tape()) {
    throw std::invalid_argument("op: tensors belong to different tapes");
  }
  Tape& tape = *a.tape();
  const bool rg = a.requires_grad() || b.requires_grad();
  const int aid = a.id();
  const int bid = b.id();
  Tape::PullFn fn;
  if (rg) {
    fn = [aid, bid, pull = std::move(pull)](Tape& t, int out) {
      pull(t, out, aid, bid);
    };
  }
  return tape.record(std::move(value), rg, std::move(fn));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw std::invalid_argument("matmul: inner dimensions disagree, " +
                                shape_str(av) + " vs " + shape_str(bv));
  }
  return binary(a, b, av * bv, [](Tape& t, int out, int aid, int bid) {
    const Matrix& u = t.grad_ref(out);
    t.grad_ref(aid).noalias() += u * t.value_of(bid).transpose();
    t.grad_ref(bid).noalias() += t.value_of(aid).transpose() * u;
  });
}

Tensor transpose(const Tensor& a) {
  return unary(a, a.value().transpose(), [](Tape& t, int out, int aid) {
    t.grad_ref(aid) += t.grad_ref(out).transpose();
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a.value(), b.value(), "add");
  return binary(a, b, a.value() + b.value(),
                [](Tape& t, int out, int aid, int bid) {
                  t.grad_ref(aid) += t.grad_ref(out);
                  t.grad_ref(bid) += t.grad_ref(out);
                });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a.value(), b.value(), "sub");
  return binary(a, b, a.value() - b.value(),
                [](Tape& t, int out, int aid, int bid) {
                  t.grad_ref(aid) += t.grad_ref(out);
                  t.grad_ref(bid) -= t.grad_ref(out);
                });
}

Tensor cwise_mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a.value(), b.value(), "cwise_mul");
  return binary(a, b, a.value().cwiseProduct(b.value()),
                [](Tape& t, int out, int aid, int bid) {
                  const Matrix& u = t.grad_ref(out);
                  t.grad_ref(aid) += u.cwiseProduct(t.value_of(bid));
                  t.grad_ref(bid) += u.cwiseProduct(t.value_of(aid));
                });
}

Tensor affine(const Tensor& a, double m, double c) {
  Matrix v = (a.value().array() * m + c).matrix();
  return unary(a, std::move(v), [m](Tape& t, int out, int aid) {
    t.grad_ref(aid) += m * t.grad_ref(out);
  });
}

Tensor scale(const Tensor& a, double s) { return affine(a, s, 0.0); }

Tensor exp_elem(const Tensor& a) {
  Matrix v = a.value().array().exp().matrix();
  return unary(a, std::move(v), [](Tape& t, int out, int aid) {
    t.grad_ref(aid) += t.grad_ref(out).cwiseProduct(t.value_of(out));
  });
}

Tensor log_clamped(const Tensor& a) {
  Matrix v = a.value().array().max(kLogEps).log().matrix();
  return unary(a, std::move(v), [](Tape& t, int out, int aid) {
    const Matrix& x = t.value_of(aid);
    const Matrix& u = t.grad_ref(out);
    t.grad_ref(aid).array() +=
        (x.array() > kLogEps).select(u.array() / x.array(), 0.0);
  });
}

Tensor relu(const Tensor& a) {
  Matrix v = a.value().cwiseMax(0.0);
  return unary(a, std::move(v), [](Tape& t, int out, int aid) {
    const Matrix& x = t.value_of(aid);
    const Matrix& u = t.grad_ref(out);
    t.grad_ref(aid).array() += (x.array() > 0.0).select(u.array(), 0.0);
  });
}

Tensor sigmoid(const Tensor& a) {
  Matrix v = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return unary(a, std::move(v), [](Tape& t, int out, int aid) {
    const auto y = t.value_of(out).array();
    t.grad_ref(aid).array() += t.grad_ref(out).array() * y * (1.0 - y);
  });
}

Tensor rsqrt(const Tensor& a) {
  Matrix v = a.value().array().rsqrt().matrix();
  return unary(a, std::move(v), [](Tape& t, int out, int aid) {
    const auto y = t.value_of(out).array();
    t.grad_ref(aid).array() += t.grad_ref(out).array() * (-0.5 * y * y * y);
  });
}

Tensor row_sum(const Tensor& a) {
  Matrix v = a.value().rowwise().sum();
  const Eigen::Index m = a.cols();
  return unary(a, std::move(v), [m](Tape& t, int out, int aid) {
    t.grad_ref(aid) += t.grad_ref(out).replicate(1, m);
  });
}

Tensor col_sum(const Tensor& a) {
  Matrix v = a.value().colwise().sum();
  const Eigen::Index n = a.rows();
  return unary(a, std::move(v), [n](Tape& t, int out, int aid) {
    t.grad_ref(aid) += t.grad_ref(out).replicate(n, 1);
  });
}

Tensor sum_all(const Tensor& a) {
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return unary(a, std::move(v), [](Tape& t, int out, int aid) {
    t.grad_ref(aid).array() += t.grad_ref(out)(0, 0);
  });
}

Tensor mean_all(const Tensor& a) {
  const double n = static_cast<double>(a.value().size());
  Matrix v(1, 1);
  v(0, 0) = a.value().mean();
  return unary(a, std::move(v), [n](Tape& t, int out, int aid) {
    t.grad_ref(aid).array() += t.grad_ref(out)(0, 0) / n;
  });
}

Tensor softmax_rows(const Tensor& a) {
  const Matrix& x = a.value();
  if (x.cols() < 1) {
    throw std::invalid_argument("softmax_rows: need at least one column");
  }
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::ArrayXd e = (x.row(i).array() - x.row(i).maxCoeff()).exp();
    y.row(i) = (e / e.sum()).matrix();
  }
  return unary(a, std::move(y), [](Tape& t, int out, int aid) {
    const Matrix& y = t.value_of(out);
    const Matrix& u = t.grad_ref(out);
    Eigen::VectorXd dot = u.cwiseProduct(y).rowwise().sum();
    t.grad_ref(aid) +=
        y.cwiseProduct(u - dot.replicate(1, y.cols()));
  });
}

Tensor pairwise_sqdist(const Tensor& x, const Tensor& c) {
  const Matrix& xv = x.value();
  const Matrix& cv = c.value();
  if (xv.cols() != cv.cols()) {
    throw std::invalid_argument("pairwise_sqdist: feature dims disagree, " +
                                shape_str(xv) + " vs " + shape_str(cv));
  }
  Matrix d(xv.rows(), cv.rows());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    d.row(i) = (cv.rowwise() - xv.row(i)).rowwise().squaredNorm().transpose();
  }
  return binary(x, c, std::move(d), [](Tape& t, int out, int xid, int cid) {
    const Matrix& u = t.grad_ref(out);
    const Matrix& xv = t.value_of(xid);
    const Matrix& cv = t.value_of(cid);
    t.grad_ref(xid).noalias() +=
        2.0 * (u.rowwise().sum().asDiagonal() * xv - u * cv);
    t.grad_ref(cid).noalias() +=
        2.0 * (u.colwise().sum().asDiagonal() * cv - u.transpose() * xv);
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows()) {
    throw std::invalid_argument("concat_cols: row counts disagree, " +
                                shape_str(av) + " vs " + shape_str(bv));
  }
  Matrix v(av.rows(), av.cols() + bv.cols());
  v << av, bv;
  const Eigen::Index ac = av.cols();
  const Eigen::Index bc = bv.cols();
  return binary(a, b, std::move(v),
                [ac, bc](Tape& t, int out, int aid, int bid) {
                  const Matrix& u = t.grad_ref(out);
                  t.grad_ref(aid) += u.leftCols(ac);
                  t.grad_ref(bid) += u.rightCols(bc);
                });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw std::invalid_argument("concat_rows: column counts disagree, " +
                                shape_str(av) + " vs " + shape_str(bv));
  }
  Matrix v(av.rows() + bv.rows(), av.cols());
  v << av, bv;
  const Eigen::Index ar = av.rows();
  const Eigen::Index br = bv.rows();
  return binary(a, b, std::move(v),
                [ar, br](Tape& t, int out, int aid, int bid) {
                  const Matrix& u = t.grad_ref(out);
                  t.grad_ref(aid) += u.topRows(ar);
                  t.grad_ref(bid) += u.bottomRows(br);
                });
}

Tensor rows(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  const Matrix& av = a.value();
  if (start < 0 || count < 0 || start + count > av.rows()) {
    throw std::invalid_argument("rows: slice [" + std::to_string(start) + "," +
                                std::to_string(start + count) +
                                ") out of range for " + shape_str(av));
  }
  Matrix v = av.middleRows(start, count);
  return unary(a, std::move(v), [start, count](Tape& t, int out, int aid) {
    t.grad_ref(aid).middleRows(start, count) += t.grad_ref(out);
  });
}

Tensor scale_rows(const Tensor& a, const Tensor& v) {
  const Matrix& av = a.value();
  const Matrix& vv = v.value();
  if (vv.cols() != 1 || vv.rows() != av.rows()) {
    throw std::invalid_argument("scale_rows: scale must be " +
                                std::to_string(av.rows()) + "x1, got " +
                                shape_str(vv));
  }
  Matrix out = vv.col(0).asDiagonal() * av;
  return binary(a, v, std::move(out), [](Tape& t, int o, int aid, int vid) {
    const Matrix& u = t.grad_ref(o);
    const Matrix& av = t.value_of(aid);
    const Matrix& vv = t.value_of(vid);
    t.grad_ref(aid).noalias() += vv.col(0).asDiagonal() * u;
    t.grad_ref(vid).col(0) += u.cwiseProduct(av).rowwise().sum();
  });
}

Tensor scale_cols(const Tensor& a, const Tensor& v) {
  const Matrix& av = a.value();
  const Matrix& vv = v.value();
  if (vv.cols() != 1 || vv.rows() != av.cols()) {
    throw std::invalid_argument("scale_cols: scale must be " +
                                std::to_string(av.cols()) + "x1, got " +
                                shape_str(vv));
  }
  Matrix out = av * vv.col(0).asDiagonal();
  return binary(a, v, std::move(out), [](Tape& t, int o, int aid, int vid) {
    const Matrix& u = t.grad_ref(o);
    const Matrix& av = t.value_of(aid);
    const Matrix& vv = t.value_of(vid);
    t.grad_ref(aid).noalias() += u * vv.col(0).asDiagonal();
    t.grad_ref(vid).col(0) += u.cwiseProduct(av).colwise().sum().transpose();
  });
}

Tensor add_row_vector(const Tensor& a, const Tensor& b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    throw std::invalid_argument("add_row_vector: bias must be 1x" +
                                std::to_string(av.cols()) + ", got " +
                                shape_str(bv));
  }
  Matrix v = av.rowwise() + bv.row(0);
  return binary(a, b, std::move(v), [](Tape& t, int out, int aid, int bid) {
    const Matrix& u = t.grad_ref(out);
    t.grad_ref(aid) += u;
    t.grad_ref(bid).row(0) += u.colwise().sum();
  });
}

Tensor apply_mask(const Tensor& a, const Matrix& mask) {
  require_same_shape(a.value(), mask, "apply_mask");
  return unary(a, a.value().cwiseProduct(mask),
               [mask](Tape& t, int out, int aid) {
                 t.grad_ref(aid) += t.grad_ref(out).cwiseProduct(mask);
               });
}

std::vector<std::vector<int>> top_k_index_sets(const Matrix& x, int k) {
  if (k < 0 || k > x.cols()) {
    throw std::invalid_argument("top_k_index_sets: k=" + std::to_string(k) +
                                " out of range for " + shape_str(x));
  }
  std::vector<std::vector<int>> sets(static_cast<std::size_t>(x.rows()));
  std::vector<int> idx(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::iota(idx.begin(), idx.end(), 0);
    // Descending by value, ties by lowest index.
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
      return x(i, a) > x(i, b);
    });
    std::vector<int> top(idx.begin(), idx.begin() + k);
    std::sort(top.begin(), top.end());
    sets[static_cast<std::size_t>(i)] = std::move(top);
  }
  return sets;
}

}  // namespace aglp
