#include "aglp/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "aglp/errors.hpp"

namespace aglp {

namespace {

// Balanced class assignment: label of row i is i mod K.
void sample_blobs(const DatasetParams& p, int n, bool target_domain,
                  std::mt19937_64& rng, Matrix& x, std::vector<int>& y) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double theta =
      target_domain ? p.rotation_deg * std::numbers::pi / 180.0 : 0.0;
  const double ct = std::cos(theta);
  const double st = std::sin(theta);
  const double shift = target_domain ? p.shift : 0.0;

  x.resize(n, p.dim);
  y.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int k = i % p.classes;
    const double phi = 2.0 * std::numbers::pi * k / p.classes;
    Eigen::VectorXd v(p.dim);
    for (int j = 0; j < p.dim; ++j) v(j) = p.cluster_stddev * gauss(rng);
    v(0) += p.radius * std::cos(phi);
    v(1) += p.radius * std::sin(phi);
    // Domain shift: rotate the (x0, x1) plane, translate along e0.
    const double v0 = ct * v(0) - st * v(1);
    const double v1 = st * v(0) + ct * v(1);
    v(0) = v0 + shift;
    v(1) = v1;
    x.row(i) = v.transpose();
    y[static_cast<std::size_t>(i)] = k;
  }
}

std::vector<int> sample_without_replacement(int pool, int count,
                                            std::mt19937_64& rng) {
  if (count > pool) {
    throw ConfigError("sample_batch: requested " + std::to_string(count) +
                      " from a pool of " + std::to_string(pool));
  }
  std::vector<int> idx(static_cast<std::size_t>(pool));
  for (int i = 0; i < pool; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> pick(i, pool - 1);
    std::swap(idx[static_cast<std::size_t>(i)],
              idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(count));
  return idx;
}

}  // namespace

SsdaDataset make_gaussian_shift(const DatasetParams& p, std::uint64_t seed) {
  if (p.classes < 2) throw ConfigError("dataset: need at least 2 classes");
  if (p.dim < 2) throw ConfigError("dataset: need dimension >= 2");
  if (p.shots < 1) throw ConfigError("dataset: shots must be >= 1");
  if (p.n_target < p.shots * p.classes) {
    throw ConfigError("dataset: n_target=" + std::to_string(p.n_target) +
                      " cannot cover " + std::to_string(p.shots) + "-shot x " +
                      std::to_string(p.classes) + " classes");
  }

  std::mt19937_64 rng(seed);
  SsdaDataset d;
  d.classes = p.classes;
  d.dim = p.dim;
  d.seed = seed;

  sample_blobs(p, p.n_source, false, rng, d.source_x, d.source_y);

  Matrix target_x;
  std::vector<int> target_y;
  sample_blobs(p, p.n_target, true, rng, target_x, target_y);

  // First `shots` rows of each class become L; the rest form U.
  std::vector<int> taken(static_cast<std::size_t>(p.classes), 0);
  const int nl = p.shots * p.classes;
  d.labeled_x.resize(nl, p.dim);
  d.labeled_y.reserve(static_cast<std::size_t>(nl));
  d.unlabeled_x.resize(p.n_target - nl, p.dim);
  int li = 0;
  int ui = 0;
  for (int i = 0; i < p.n_target; ++i) {
    const int k = target_y[static_cast<std::size_t>(i)];
    if (taken[static_cast<std::size_t>(k)] < p.shots) {
      ++taken[static_cast<std::size_t>(k)];
      d.labeled_x.row(li++) = target_x.row(i);
      d.labeled_y.push_back(k);
    } else {
      d.unlabeled_x.row(ui++) = target_x.row(i);
    }
  }

  sample_blobs(p, p.n_test, false, rng, d.source_test_x, d.source_test_y);
  sample_blobs(p, p.n_test, true, rng, d.target_test_x, d.target_test_y);
  return d;
}

Eigen::VectorXd augment(const Eigen::VectorXd& x, const AugmentParams& p,
                        std::mt19937_64& rng) {
  if (p.strength < 0.0) throw ConfigError("augment: strength must be >= 0");
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> scale(p.scale_lo, p.scale_hi);
  Eigen::VectorXd out = x;
  for (Eigen::Index j = 0; j < out.size(); ++j) out(j) += p.strength * gauss(rng);
  for (Eigen::Index j = 0; j < out.size(); ++j) out(j) *= scale(rng);
  return out;
}

Matrix one_hot(const std::vector<int>& labels, int classes) {
  Matrix y = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return y;
}

Batch sample_batch(const SsdaDataset& data, int m_source, int m_labeled,
                   int m_unlabeled, const AugmentParams& aug,
                   std::mt19937_64& rng) {
  Batch b;
  const int dim = data.dim;

  const auto src = sample_without_replacement(
      static_cast<int>(data.source_x.rows()), m_source, rng);
  b.source_x.resize(m_source, dim);
  b.source_labels.reserve(src.size());
  for (int i = 0; i < m_source; ++i) {
    b.source_x.row(i) = data.source_x.row(src[static_cast<std::size_t>(i)]);
    b.source_labels.push_back(data.source_y[static_cast<std::size_t>(
        src[static_cast<std::size_t>(i)])]);
  }
  b.source_y = one_hot(b.source_labels, data.classes);

  const auto lab = sample_without_replacement(
      static_cast<int>(data.labeled_x.rows()), m_labeled, rng);
  b.labeled_x.resize(m_labeled, dim);
  b.labeled_labels.reserve(lab.size());
  for (int i = 0; i < m_labeled; ++i) {
    b.labeled_x.row(i) = data.labeled_x.row(lab[static_cast<std::size_t>(i)]);
    b.labeled_labels.push_back(data.labeled_y[static_cast<std::size_t>(
        lab[static_cast<std::size_t>(i)])]);
  }
  b.labeled_y = one_hot(b.labeled_labels, data.classes);

  const auto unl = sample_without_replacement(
      static_cast<int>(data.unlabeled_x.rows()), m_unlabeled, rng);
  b.unlabeled_x.resize(m_unlabeled, dim);
  b.unlabeled_v1.resize(m_unlabeled, dim);
  b.unlabeled_v2.resize(m_unlabeled, dim);
  for (int i = 0; i < m_unlabeled; ++i) {
    Eigen::VectorXd x =
        data.unlabeled_x.row(unl[static_cast<std::size_t>(i)]).transpose();
    b.unlabeled_x.row(i) = x.transpose();
    b.unlabeled_v1.row(i) = augment(x, aug, rng).transpose();
    b.unlabeled_v2.row(i) = augment(x, aug, rng).transpose();
  }
  return b;
}

namespace {

void write_rows(std::ostream& out, const char* tag, const Matrix& x,
                const std::vector<int>* y) {
  char buf[64];
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out << tag << ','
        << (y ? (*y)[static_cast<std::size_t>(i)] : -1);
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", x(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace

void save_dataset_csv(const SsdaDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write dataset file: " + path);
  out << "split,label";
  for (int j = 0; j < data.dim; ++j) out << ",f" << j;
  out << '\n';
  write_rows(out, "source", data.source_x, &data.source_y);
  write_rows(out, "labeled", data.labeled_x, &data.labeled_y);
  write_rows(out, "unlabeled", data.unlabeled_x, nullptr);
  write_rows(out, "source_test", data.source_test_x, &data.source_test_y);
  write_rows(out, "target_test", data.target_test_x, &data.target_test_y);
}

SsdaDataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read dataset file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty dataset file: " + path);
  // header: split,label,f0,...
  int dim = -2;
  for (char c : line) {
    if (c == ',') ++dim;
  }
  ++dim;
  if (dim < 1) throw ConfigError("malformed dataset header: " + line);

  struct Split {
    std::vector<Eigen::VectorXd> x;
    std::vector<int> y;
  };
  Split source, labeled, unlabeled, source_test, target_test;

  int max_label = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tag, field;
    std::getline(ss, tag, ',');
    std::getline(ss, field, ',');
    const int label = std::stoi(field);
    max_label = std::max(max_label, label);
    Eigen::VectorXd x(dim);
    for (int j = 0; j < dim; ++j) {
      if (!std::getline(ss, field, ',')) {
        throw ConfigError("short dataset row: " + line);
      }
      x(j) = std::stod(field);
    }
    Split* s = nullptr;
    if (tag == "source") s = &source;
    else if (tag == "labeled") s = &labeled;
    else if (tag == "unlabeled") s = &unlabeled;
    else if (tag == "source_test") s = &source_test;
    else if (tag == "target_test") s = &target_test;
    else throw ConfigError("unknown split tag: " + tag);
    s->x.push_back(std::move(x));
    s->y.push_back(label);
  }

  auto pack = [dim](const Split& s) {
    Matrix m(static_cast<Eigen::Index>(s.x.size()), dim);
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      m.row(static_cast<Eigen::Index>(i)) = s.x[i].transpose();
    }
    return m;
  };

  SsdaDataset d;
  d.dim = dim;
  d.classes = max_label + 1;
  d.source_x = pack(source);
  d.source_y = source.y;
  d.labeled_x = pack(labeled);
  d.labeled_y = labeled.y;
  d.unlabeled_x = pack(unlabeled);
  d.source_test_x = pack(source_test);
  d.source_test_y = source_test.y;
  d.target_test_x = pack(target_test);
  d.target_test_y = target_test.y;
  return d;
}

}  // namespace aglp
