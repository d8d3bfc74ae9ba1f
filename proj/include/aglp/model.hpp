#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "aglp/tape.hpp"

// The network stack: MLP feature extractor, Data Structure Analyzer
// producing per-sample structure scores, instance-graph construction from
// the score Gram matrix, stacked graph convolutions over that graph, and
// a linear classifier on the fused (extractor + graph) features.

namespace aglp {

struct ModelConfig {
  int input_dim = 2;
  int classes = 4;
  std::vector<int> extractor_hidden = {64};
  int feature_dim = 64;  // extractor output = graph signal dimension
  int dsa_hidden = 32;
  int dsa_out = 16;  // structure score dimension h
  std::vector<int> gcn_dims = {32, 16};  // hidden..output channels
  double dropout = 0.2;

  int gcn_out() const { return gcn_dims.back(); }
  int fused_dim() const { return feature_dim + gcn_out(); }
  void validate() const;
};

struct Dense {
  Matrix W;
  Matrix b;  // 1 x out
};

class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // Mutable named view over every weight matrix; order is stable and
  // defines the checkpoint layout.
  std::vector<std::pair<std::string, Matrix*>> named_weights();
  std::vector<std::pair<std::string, const Matrix*>> named_weights() const;

  std::vector<Dense>& extractor() { return extractor_; }
  std::vector<Dense>& dsa() { return dsa_; }
  std::vector<Matrix>& gcn() { return gcn_; }
  Dense& classifier() { return classifier_; }
  const std::vector<Dense>& extractor() const { return extractor_; }
  const std::vector<Dense>& dsa() const { return dsa_; }
  const std::vector<Matrix>& gcn() const { return gcn_; }
  const Dense& classifier() const { return classifier_; }

 private:
  ModelConfig config_;
  std::vector<Dense> extractor_;
  std::vector<Dense> dsa_;
  std::vector<Matrix> gcn_;  // filter per layer, no bias
  Dense classifier_;
};

// Inverted-dropout masks for the non-final GCN layers, drawn ahead of the
// forward pass so a step can be replayed exactly.
struct DropoutMasks {
  std::vector<Matrix> gcn;
};

DropoutMasks draw_dropout_masks(const ModelConfig& config, int nodes,
                                std::mt19937_64& rng);

struct InstanceGraph {
  Tensor scores;       // G_sc, nodes x h, entries in (0,1)
  Tensor adjacency;    // G_sc G_sc^T + I
  Tensor degrees;      // nodes x 1, strictly positive
  Tensor propagation;  // D^{-1/2} (G_sc G_sc^T + I) D^{-1/2}
};

struct ForwardResult {
  Tensor features;   // G
  InstanceGraph graph;
  Tensor structure;  // Z (zeros when the graph branch is disabled)
  Tensor fused;      // concat(G, Z)
  Tensor logits;
  Tensor probs;      // softmax rows
  bool has_graph = false;
};

// Binds a model's weights onto one tape for a single forward/backward.
class ModelOnTape {
 public:
  ModelOnTape(const Model& model, Tape& tape);

  Tensor extract(const Matrix& x) const;
  InstanceGraph build_graph(const Tensor& features) const;
  // masks == nullptr disables dropout (evaluation mode).
  Tensor gcn_forward(const InstanceGraph& graph, const Tensor& features,
                     const DropoutMasks* masks) const;
  Tensor classify_logits(const Tensor& features,
                         const Tensor& structure) const;

  // Full stack; use_graph=false skips DSA/GCN and feeds zero structure
  // features, leaving those weights out of the gradient entirely.
  ForwardResult forward(const Matrix& x, const DropoutMasks* masks,
                        bool use_graph) const;

  // Same order as Model::named_weights().
  struct Param {
    std::string name;
    Tensor node;
  };
  const std::vector<Param>& params() const { return params_; }

 private:
  const Tensor& param(const std::string& name) const;

  const Model* model_;
  Tape* tape_;
  std::vector<Param> params_;
};

// Checkpoint layout: one line per weight, "name,rows,cols,v0,v1,..."
// with row-major values at full double precision.
void save_weights_csv(const Model& model, const std::string& path);
void load_weights_csv(Model& model, const std::string& path);

}  // namespace aglp
