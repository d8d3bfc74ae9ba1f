#include "aglp/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "aglp/errors.hpp"

namespace aglp {

void ModelConfig::validate() const {
  if (input_dim < 1) throw ConfigError("model: input_dim must be >= 1");
  if (classes < 2) throw ConfigError("model: need at least 2 classes");
  if (feature_dim < 1) throw ConfigError("model: feature_dim must be >= 1");
  if (dsa_hidden < 1 || dsa_out < 1) {
    throw ConfigError("model: DSA dimensions must be >= 1");
  }
  if (gcn_dims.empty()) throw ConfigError("model: need at least one GCN layer");
  for (int d : gcn_dims) {
    if (d < 1) throw ConfigError("model: GCN channel counts must be >= 1");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ConfigError("model: dropout must be in [0,1)");
  }
}

namespace {

Matrix glorot(int rows, int cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix w(rows, cols);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = u(rng);
  }
  return w;
}

Dense make_dense(int in, int out, std::mt19937_64& rng) {
  return Dense{glorot(in, out, rng), Matrix::Zero(1, out)};
}

}  // namespace

Model::Model(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);

  int in = config_.input_dim;
  for (int h : config_.extractor_hidden) {
    extractor_.push_back(make_dense(in, h, rng));
    in = h;
  }
  extractor_.push_back(make_dense(in, config_.feature_dim, rng));

  dsa_.push_back(make_dense(config_.feature_dim, config_.dsa_hidden, rng));
  dsa_.push_back(make_dense(config_.dsa_hidden, config_.dsa_out, rng));

  in = config_.feature_dim;
  for (int c : config_.gcn_dims) {
    gcn_.push_back(glorot(in, c, rng));
    in = c;
  }

  classifier_ = make_dense(config_.fused_dim(), config_.classes, rng);
}

std::vector<std::pair<std::string, Matrix*>> Model::named_weights() {
  std::vector<std::pair<std::string, Matrix*>> out;
  for (std::size_t i = 0; i < extractor_.size(); ++i) {
    out.emplace_back("extractor." + std::to_string(i) + ".W",
                     &extractor_[i].W);
    out.emplace_back("extractor." + std::to_string(i) + ".b",
                     &extractor_[i].b);
  }
  for (std::size_t i = 0; i < dsa_.size(); ++i) {
    out.emplace_back("dsa." + std::to_string(i) + ".W", &dsa_[i].W);
    out.emplace_back("dsa." + std::to_string(i) + ".b", &dsa_[i].b);
  }
  for (std::size_t i = 0; i < gcn_.size(); ++i) {
    out.emplace_back("gcn." + std::to_string(i) + ".W", &gcn_[i]);
  }
  out.emplace_back("classifier.W", &classifier_.W);
  out.emplace_back("classifier.b", &classifier_.b);
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> Model::named_weights()
    const {
  auto mutable_view = const_cast<Model*>(this)->named_weights();
  std::vector<std::pair<std::string, const Matrix*>> out;
  out.reserve(mutable_view.size());
  for (auto& [name, ptr] : mutable_view) out.emplace_back(name, ptr);
  return out;
}

DropoutMasks draw_dropout_masks(const ModelConfig& config, int nodes,
                                std::mt19937_64& rng) {
  DropoutMasks masks;
  if (config.dropout <= 0.0) return masks;
  std::bernoulli_distribution keep(1.0 - config.dropout);
  const double scale = 1.0 / (1.0 - config.dropout);
  for (std::size_t layer = 0; layer + 1 < config.gcn_dims.size(); ++layer) {
    Matrix m(nodes, config.gcn_dims[layer]);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        m(i, j) = keep(rng) ? scale : 0.0;
      }
    }
    masks.gcn.push_back(std::move(m));
  }
  return masks;
}

ModelOnTape::ModelOnTape(const Model& model, Tape& tape)
    : model_(&model), tape_(&tape) {
  for (auto& [name, storage] : model.named_weights()) {
    params_.push_back(Param{name, tape.parameter(*storage)});
  }
}

const Tensor& ModelOnTape::param(const std::string& name) const {
  for (const Param& p : params_) {
    if (p.name == name) return p.node;
  }
  throw std::logic_error("unknown parameter: " + name);
}

Tensor ModelOnTape::extract(const Matrix& x) const {
  if (x.cols() != model_->config().input_dim) {
    throw std::invalid_argument(
        "extract: input dimension " + std::to_string(x.cols()) +
        " does not match extractor input " +
        std::to_string(model_->config().input_dim));
  }
  Tensor h = tape_->constant(x);
  const std::size_t layers = model_->extractor().size();
  for (std::size_t i = 0; i < layers; ++i) {
    const std::string base = "extractor." + std::to_string(i);
    h = add_row_vector(matmul(h, param(base + ".W")), param(base + ".b"));
    if (i + 1 < layers) h = relu(h);
  }
  return h;
}

InstanceGraph ModelOnTape::build_graph(const Tensor& features) const {
  Tensor h = features;
  h = relu(add_row_vector(matmul(h, param("dsa.0.W")), param("dsa.0.b")));
  h = add_row_vector(matmul(h, param("dsa.1.W")), param("dsa.1.b"));
  Tensor scores = sigmoid(h);

  const Eigen::Index n = scores.rows();
  Tensor identity = tape_->constant(Matrix::Identity(n, n));
  Tensor adjacency = add(matmul(scores, transpose(scores)), identity);
  Tensor degrees = row_sum(adjacency);
  Tensor inv_sqrt = rsqrt(degrees);
  Tensor propagation =
      scale_rows(scale_cols(adjacency, inv_sqrt), inv_sqrt);
  return InstanceGraph{scores, adjacency, degrees, propagation};
}

Tensor ModelOnTape::gcn_forward(const InstanceGraph& graph,
                                const Tensor& features,
                                const DropoutMasks* masks) const {
  if (graph.propagation.rows() != features.rows()) {
    throw ConfigError("gcn_forward: graph has " +
                      std::to_string(graph.propagation.rows()) +
                      " nodes but signal has " +
                      std::to_string(features.rows()) + " rows");
  }
  Tensor h = features;
  const std::size_t layers = model_->gcn().size();
  for (std::size_t i = 0; i < layers; ++i) {
    h = matmul(matmul(graph.propagation, h),
               param("gcn." + std::to_string(i) + ".W"));
    if (i + 1 < layers) {
      h = relu(h);
      if (masks && i < masks->gcn.size()) {
        h = apply_mask(h, masks->gcn[i]);
      }
    }
  }
  return h;
}

Tensor ModelOnTape::classify_logits(const Tensor& features,
                                    const Tensor& structure) const {
  if (features.rows() != structure.rows()) {
    throw std::invalid_argument(
        "classify: feature rows " + std::to_string(features.rows()) +
        " != structure rows " + std::to_string(structure.rows()));
  }
  Tensor fused = concat_cols(features, structure);
  return add_row_vector(matmul(fused, param("classifier.W")),
                        param("classifier.b"));
}

ForwardResult ModelOnTape::forward(const Matrix& x, const DropoutMasks* masks,
                                   bool use_graph) const {
  ForwardResult r;
  r.features = extract(x);
  if (use_graph) {
    r.graph = build_graph(r.features);
    r.structure = gcn_forward(r.graph, r.features, masks);
    r.has_graph = true;
  } else {
    r.structure = tape_->constant(
        Matrix::Zero(x.rows(), model_->config().gcn_out()));
  }
  r.fused = concat_cols(r.features, r.structure);
  r.logits = add_row_vector(matmul(r.fused, param("classifier.W")),
                            param("classifier.b"));
  r.probs = softmax_rows(r.logits);
  return r;
}

void save_weights_csv(const Model& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint: " + path);
  char buf[64];
  for (const auto& [name, w] : model.named_weights()) {
    out << name << ',' << w->rows() << ',' << w->cols();
    for (Eigen::Index i = 0; i < w->rows(); ++i) {
      for (Eigen::Index j = 0; j < w->cols(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", (*w)(i, j));
        out << ',' << buf;
      }
    }
    out << '\n';
  }
}

void load_weights_csv(Model& model, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read checkpoint: " + path);
  auto weights = model.named_weights();
  std::string line;
  std::size_t seen = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string name, field;
    std::getline(ss, name, ',');
    std::getline(ss, field, ',');
    const Eigen::Index rows = std::stol(field);
    std::getline(ss, field, ',');
    const Eigen::Index cols = std::stol(field);

    Matrix* target = nullptr;
    for (auto& [wname, ptr] : weights) {
      if (wname == name) {
        target = ptr;
        break;
      }
    }
    if (!target) throw ConfigError("checkpoint has unknown weight: " + name);
    if (target->rows() != rows || target->cols() != cols) {
      throw ConfigError("checkpoint shape mismatch for " + name + ": file " +
                        std::to_string(rows) + "x" + std::to_string(cols) +
                        ", model " + std::to_string(target->rows()) + "x" +
                        std::to_string(target->cols()));
    }
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        if (!std::getline(ss, field, ',')) {
          throw ConfigError("checkpoint row too short for " + name);
        }
        (*target)(i, j) = std::stod(field);
      }
    }
    ++seen;
  }
  if (seen != weights.size()) {
    throw ConfigError("checkpoint is missing weights: expected " +
                      std::to_string(weights.size()) + ", found " +
                      std::to_string(seen));
  }
}

}  // namespace aglp
