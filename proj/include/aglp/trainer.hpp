#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aglp/data.hpp"
#include "aglp/losses.hpp"
#include "aglp/model.hpp"
#include "aglp/prototypes.hpp"
#include "aglp/tape.hpp"

// End-to-end training: one fused forward pass per step over the
// concatenated mini-batch (source, labeled target, three unlabeled views)
// sharing a single instance graph, every loss term of the composite
// objective, SGD with momentum and an inverse-decay schedule that restarts
// after warmup, moving centroids, periodic pseudo-center refresh, ablation
// switches, and evaluation.

namespace aglp {

struct TrainerConfig {
  int total_steps = 3000;
  int warmup_steps = 300;
  double learning_rate = 0.02;
  double lr_decay = 1e-4;  // lr(t) = lr0 * (1 + decay * t)^(-power)
  double lr_power = 0.75;
  double momentum = 0.9;
  double beta = 0.5;   // centroid alignment weight
  double alpha = 0.3;  // source label mixing ratio
  double proto_temperature = 0.6;
  int update_interval = 100;  // pseudo-center refresh period (post warmup)
  double tau = 0.95;          // pseudo-label confidence threshold
  double nu = 1.0;            // ramp-up ceiling
  int ramp_steps = 0;         // 0 -> 20% of total_steps
  double centroid_momentum = 0.7;
  int topk = 5;  // feature index set size for pairwise pseudo-labels
  int batch_source = 16;
  int batch_labeled = 8;
  int batch_unlabeled = 16;
  double aug_strength = 0.1;
  int eval_interval = 100;
  int checkpoint_interval = 0;  // 0 -> no periodic checkpoints
  bool use_saa = true;   // structure-aware alignment (DSA + GCN branch)
  bool use_ca = true;    // class centroid alignment
  bool use_sla = true;   // source label adaptation after warmup
  bool use_cdac = true;  // unlabeled losses (AAC, PL, consistency)
  std::uint64_t seed = 1;

  int effective_ramp_steps() const {
    return ramp_steps > 0 ? ramp_steps : total_steps / 5;
  }
  void validate() const;
};

struct LossReport {
  int step = 0;
  double source = 0;  // adapted source loss (plain CE during warmup)
  double ce = 0;      // labeled-target cross-entropy
  double aac = 0;
  double pl = 0;
  double con = 0;
  double ca = 0;     // unweighted centroid alignment value
  double total = 0;  // source + ce + aac + pl + con + beta * ca
  double lr = 0;
};

struct EvalResult {
  double accuracy = 0;
  Eigen::VectorXd per_class;
  Eigen::MatrixXi confusion;  // rows = true class, cols = predicted
};

struct EvalRecord {
  int step = 0;
  double source_accuracy = 0;
  double target_accuracy = 0;
};

struct RunResult {
  std::vector<LossReport> log;
  std::vector<EvalRecord> evals;
};

// Inputs that the differentiable step treats as constants. Splitting them
// out lets a finite-difference harness re-evaluate the step loss at
// perturbed weights while holding every detached quantity fixed.
struct FrozenStep {
  DropoutMasks masks;
  Matrix source_targets;        // one-hot or adapted soft labels
  Eigen::MatrixXi pair_labels;  // empty when unlabeled losses are off
  std::vector<int> unl_pseudo;  // pseudo-labels for the CA target side
  double ramp_weight = 0;
  bool sla_active = false;
};

struct StepTerms {
  Tensor source, ce, aac, pl, con, ca, total;
  ForwardResult forward;
};

// Builds every loss term on `tape` from one fused forward pass. When
// `centroids` is non-null the centroid EMA blend is recorded and the state
// committed; passing a copy makes the call side-effect free.
StepTerms build_step_losses(ModelOnTape& mot, Tape& tape, const Batch& batch,
                            const TrainerConfig& cfg, const FrozenStep& frozen,
                            CentroidState* centroids);

class Trainer {
 public:
  Trainer(ModelConfig model_config, TrainerConfig config,
          const SsdaDataset& data);

  // One optimization step; throws TrainingAbort on a non-finite term.
  LossReport train_step();

  // Runs from the current step to total_steps. `checkpoint_dir`, when
  // set, receives periodic and final checkpoints.
  RunResult run(const std::optional<std::string>& checkpoint_dir = {});

  EvalResult evaluate(const Matrix& x, const std::vector<int>& y) const;
  EvalRecord evaluate_now() const;

  // Fused (extractor + structure) features in evaluation mode.
  Matrix fused_features(const Matrix& x) const;

  void save_checkpoint(const std::string& dir) const;
  void load_checkpoint(const std::string& dir);

  // Detached ingredients for the step that would run next.
  FrozenStep make_frozen(const Batch& batch);

  Batch sample_step_batch();

  Model& model() { return model_; }
  const Model& model() const { return model_; }
  int step() const { return step_; }
  const CentroidState& centroids() const { return centroids_; }
  bool has_pseudo_centers() const { return pseudo_centers_.has_value(); }
  const TrainerConfig& config() const { return config_; }
  double current_lr() const;

 private:
  void maybe_refresh_pseudo_centers();

  ModelConfig model_config_;
  TrainerConfig config_;
  const SsdaDataset* data_;
  Model model_;
  std::mt19937_64 rng_;
  int step_ = 0;
  int lr_reset_step_ = 0;
  std::map<std::string, Matrix> velocity_;
  CentroidState centroids_;
  std::optional<PrototypeSet> pseudo_centers_;
};

void write_training_log_csv(const std::string& path,
                            const std::vector<LossReport>& log);
void write_eval_csv(const std::string& path,
                    const std::vector<EvalRecord>& evals);
void write_confusion_csv(const std::string& path, const EvalResult& result);

}  // namespace aglp
