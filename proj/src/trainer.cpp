#include "aglp/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "aglp/errors.hpp"

namespace aglp {

void TrainerConfig::validate() const {
  if (total_steps < 1) throw ConfigError("trainer: total_steps must be >= 1");
  if (warmup_steps < 0 || warmup_steps >= total_steps) {
    throw ConfigError("trainer: warmup_steps must be in [0, total_steps)");
  }
  if (learning_rate <= 0.0) {
    throw ConfigError("trainer: learning_rate must be > 0");
  }
  if (lr_decay < 0.0 || lr_power < 0.0) {
    throw ConfigError("trainer: lr schedule parameters must be >= 0");
  }
  if (momentum < 0.0 || momentum >= 1.0) {
    throw ConfigError("trainer: momentum must be in [0,1)");
  }
  if (beta < 0.0) throw ConfigError("trainer: beta must be >= 0");
  if (alpha < 0.0 || alpha > 1.0) {
    throw ConfigError("trainer: alpha must be in [0,1]");
  }
  if (proto_temperature <= 0.0) {
    throw ConfigError("trainer: proto_temperature must be > 0");
  }
  if (update_interval < 1) {
    throw ConfigError("trainer: update_interval must be >= 1");
  }
  if (tau <= 0.0 || tau > 1.0) throw ConfigError("trainer: tau must be in (0,1]");
  if (nu <= 0.0) throw ConfigError("trainer: nu must be > 0");
  if (centroid_momentum < 0.0 || centroid_momentum > 1.0) {
    throw ConfigError("trainer: centroid_momentum must be in [0,1]");
  }
  if (topk < 1) throw ConfigError("trainer: topk must be >= 1");
  if (batch_source < 1 || batch_labeled < 1 || batch_unlabeled < 0) {
    throw ConfigError("trainer: batch sizes must be positive");
  }
  if (eval_interval < 1) throw ConfigError("trainer: eval_interval must be >= 1");
}

namespace {

Matrix stack_batch_rows(const Batch& b) {
  const Eigen::Index n = b.source_x.rows() + b.labeled_x.rows() +
                         3 * b.unlabeled_x.rows();
  Matrix x(n, b.source_x.cols());
  Eigen::Index at = 0;
  auto put = [&](const Matrix& block) {
    x.middleRows(at, block.rows()) = block;
    at += block.rows();
  };
  put(b.source_x);
  put(b.labeled_x);
  put(b.unlabeled_x);
  put(b.unlabeled_v1);
  put(b.unlabeled_v2);
  return x;
}

}  // namespace

StepTerms build_step_losses(ModelOnTape& mot, Tape& tape, const Batch& batch,
                            const TrainerConfig& cfg, const FrozenStep& frozen,
                            CentroidState* centroids) {
  const int ns = batch.source_count();
  const int nl = batch.labeled_count();
  const int m = batch.unlabeled_count();

  StepTerms t;
  t.forward = mot.forward(stack_batch_rows(batch),
                          cfg.use_saa ? &frozen.masks : nullptr, cfg.use_saa);
  const Tensor& probs = t.forward.probs;
  Tensor p_src = rows(probs, 0, ns);
  Tensor p_lab = rows(probs, ns, nl);
  Tensor p_unl = rows(probs, ns + nl, m);
  Tensor p_v1 = rows(probs, ns + nl + m, m);
  Tensor p_v2 = rows(probs, ns + nl + 2 * m, m);

  t.source = cross_entropy(p_src, frozen.source_targets);
  t.ce = cross_entropy(p_lab, batch.labeled_y);

  if (cfg.use_cdac && m > 0) {
    t.aac = aac_loss(p_unl, p_v1, frozen.pair_labels);
    t.pl = pl_loss(p_unl, p_v2, cfg.tau);
    t.con = consistency_loss(p_v1, p_v2, frozen.ramp_weight);
  } else {
    t.aac = tape.constant(Matrix::Zero(1, 1));
    t.pl = tape.constant(Matrix::Zero(1, 1));
    t.con = tape.constant(Matrix::Zero(1, 1));
  }

  if (cfg.use_ca && centroids) {
    Tensor fused_src = rows(t.forward.fused, 0, ns);
    Tensor fused_lab = rows(t.forward.fused, ns, nl);
    Tensor fused_unl = rows(t.forward.fused, ns + nl, m);
    // Labeled-target rows contribute with their true labels, unlabeled
    // rows with frozen classifier pseudo-labels.
    Tensor fused_tgt = concat_rows(fused_lab, fused_unl);
    std::vector<int> tgt_labels = batch.labeled_labels;
    tgt_labels.insert(tgt_labels.end(), frozen.unl_pseudo.begin(),
                      frozen.unl_pseudo.end());
    t.ca = centroid_alignment_step(*centroids, fused_src,
                                   batch.source_labels, fused_tgt,
                                   tgt_labels);
  } else {
    t.ca = tape.constant(Matrix::Zero(1, 1));
  }

  t.total = add(add(add(t.source, t.ce), add(t.aac, t.pl)),
                add(t.con, scale(t.ca, cfg.beta)));
  return t;
}

Trainer::Trainer(ModelConfig model_config, TrainerConfig config,
                 const SsdaDataset& data)
    : model_config_(std::move(model_config)),
      config_(config),
      data_(&data),
      model_(model_config_, config.seed),
      rng_(config.seed * 0x9E3779B97F4A7C15ULL + 1),
      centroids_(model_config_.classes, model_config_.fused_dim(),
                 config.centroid_momentum) {
  config_.validate();
  if (model_config_.input_dim != data.dim) {
    throw ConfigError("trainer: model input_dim " +
                      std::to_string(model_config_.input_dim) +
                      " != dataset dim " + std::to_string(data.dim));
  }
  if (model_config_.classes != data.classes) {
    throw ConfigError("trainer: model classes " +
                      std::to_string(model_config_.classes) +
                      " != dataset classes " + std::to_string(data.classes));
  }
  if (config_.batch_source > data.source_x.rows() ||
      config_.batch_labeled > data.labeled_x.rows() ||
      (config_.use_cdac &&
       config_.batch_unlabeled > data.unlabeled_x.rows())) {
    throw ConfigError("trainer: batch sizes exceed dataset pools");
  }
  if (config_.topk > model_config_.feature_dim) {
    throw ConfigError("trainer: topk exceeds feature dimension");
  }
}

double Trainer::current_lr() const {
  const double t = static_cast<double>(step_ - lr_reset_step_);
  return config_.learning_rate *
         std::pow(1.0 + config_.lr_decay * t, -config_.lr_power);
}

Batch Trainer::sample_step_batch() {
  AugmentParams aug;
  aug.strength = config_.aug_strength;
  const int m = config_.use_cdac ? config_.batch_unlabeled : 0;
  return sample_batch(*data_, config_.batch_source, config_.batch_labeled, m,
                      aug, rng_);
}

FrozenStep Trainer::make_frozen(const Batch& batch) {
  FrozenStep f;
  const int nodes = batch.source_count() + batch.labeled_count() +
                    3 * batch.unlabeled_count();
  if (config_.use_saa) {
    f.masks = draw_dropout_masks(model_config_, nodes, rng_);
  }
  f.ramp_weight =
      RampSchedule{config_.nu, config_.effective_ramp_steps()}.weight(step_);
  f.sla_active = config_.use_sla && step_ >= config_.warmup_steps &&
                 pseudo_centers_.has_value();

  // Detached quantities come from an evaluation-mode pass at the current
  // weights: structure scores for the pair matrix, fused features for the
  // label adaptation model, probabilities for pseudo-labels.
  Tape tape;
  ModelOnTape mot(model_, tape);
  const ForwardResult fwd = mot.forward(stack_batch_rows(batch), nullptr,
                                        config_.use_saa);
  const int ns = batch.source_count();
  const int nl = batch.labeled_count();
  const int m = batch.unlabeled_count();

  if (f.sla_active) {
    const Matrix fused_src = fwd.fused.value().topRows(ns);
    const Matrix proto_probs = protonet_predict(*pseudo_centers_, fused_src);
    f.source_targets =
        adapt_source_labels(batch.source_y, proto_probs, config_.alpha);
  } else {
    f.source_targets = batch.source_y;
  }

  if (config_.use_cdac && m > 0) {
    const Matrix g_unl = fwd.features.value().middleRows(ns + nl, m);
    f.pair_labels = pairwise_pseudo_labels(g_unl, config_.topk);
  }
  if (m > 0) {
    f.unl_pseudo = pseudo_label(fwd.probs.value().middleRows(ns + nl, m));
  }
  return f;
}

void Trainer::maybe_refresh_pseudo_centers() {
  if (!config_.use_sla || step_ < config_.warmup_steps) return;
  const int since = step_ - config_.warmup_steps;
  if (since != 0 && since % config_.update_interval != 0) return;

  // Fused features for the whole target pool, evaluation mode.
  Matrix pool(data_->labeled_x.rows() + data_->unlabeled_x.rows(),
              data_->dim);
  pool << data_->labeled_x, data_->unlabeled_x;
  Tape tape;
  ModelOnTape mot(model_, tape);
  const ForwardResult fwd = mot.forward(pool, nullptr, config_.use_saa);
  const Matrix fused = fwd.fused.value();
  const Eigen::Index nl = data_->labeled_x.rows();

  const Matrix fused_lab = fused.topRows(nl);
  PrototypeSet labeled_centers =
      compute_prototypes(fused_lab, data_->labeled_y, data_->classes,
                         config_.proto_temperature);

  // Pseudo centers pool the labeled rows (true labels) with the unlabeled
  // rows under classifier pseudo-labels.
  std::vector<int> pooled_labels = data_->labeled_y;
  const std::vector<int> pseudo =
      pseudo_label(fwd.probs.value().bottomRows(fused.rows() - nl));
  pooled_labels.insert(pooled_labels.end(), pseudo.begin(), pseudo.end());
  const PrototypeSet& base =
      pseudo_centers_ ? *pseudo_centers_ : labeled_centers;
  pseudo_centers_ = update_prototypes(base, fused, pooled_labels);
}

LossReport Trainer::train_step() {
  if (config_.use_sla && step_ == config_.warmup_steps) {
    lr_reset_step_ = config_.warmup_steps;
  }
  maybe_refresh_pseudo_centers();

  const Batch batch = sample_step_batch();
  const FrozenStep frozen = make_frozen(batch);

  Tape tape;
  ModelOnTape mot(model_, tape);
  StepTerms terms = build_step_losses(mot, tape, batch, config_, frozen,
                                      config_.use_ca ? &centroids_ : nullptr);

  LossReport report;
  report.step = step_;
  report.source = terms.source.value()(0, 0);
  report.ce = terms.ce.value()(0, 0);
  report.aac = terms.aac.value()(0, 0);
  report.pl = terms.pl.value()(0, 0);
  report.con = terms.con.value()(0, 0);
  report.ca = terms.ca.value()(0, 0);
  report.total = terms.total.value()(0, 0);
  report.lr = current_lr();

  const std::pair<const char*, double> named[] = {
      {"source", report.source}, {"ce", report.ce},   {"aac", report.aac},
      {"pl", report.pl},         {"con", report.con}, {"ca", report.ca}};
  for (const auto& [name, v] : named) {
    if (!std::isfinite(v)) {
      throw TrainingAbort("step " + std::to_string(step_) + ": " + name +
                          " loss is non-finite");
    }
  }

  tape.backward(terms.total);

  const double lr = report.lr;
  auto weights = model_.named_weights();
  const auto& params = mot.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = tape.grad(params[i].node);
    Matrix& v = velocity_[params[i].name];
    if (v.size() == 0) v = Matrix::Zero(g.rows(), g.cols());
    v = config_.momentum * v - lr * g;
    *weights[i].second += v;
  }

  ++step_;
  return report;
}

RunResult Trainer::run(const std::optional<std::string>& checkpoint_dir) {
  RunResult result;
  while (step_ < config_.total_steps) {
    if (checkpoint_dir && config_.checkpoint_interval > 0 && step_ > 0 &&
        step_ % config_.checkpoint_interval == 0) {
      save_checkpoint(*checkpoint_dir);
    }
    result.log.push_back(train_step());
    if (step_ % config_.eval_interval == 0 || step_ == config_.total_steps) {
      result.evals.push_back(evaluate_now());
    }
  }
  if (checkpoint_dir) save_checkpoint(*checkpoint_dir);
  return result;
}

EvalResult Trainer::evaluate(const Matrix& x, const std::vector<int>& y) const {
  if (x.rows() == 0) {
    throw std::invalid_argument("evaluate: empty evaluation set");
  }
  if (static_cast<Eigen::Index>(y.size()) != x.rows()) {
    throw std::invalid_argument("evaluate: label count mismatch");
  }
  Tape tape;
  ModelOnTape mot(model_, tape);
  const ForwardResult fwd = mot.forward(x, nullptr, config_.use_saa);
  const Matrix& probs = fwd.probs.value();
  const int classes = model_config_.classes;

  EvalResult r;
  r.confusion = Eigen::MatrixXi::Zero(classes, classes);
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index pred = 0;
    probs.row(i).maxCoeff(&pred);
    r.confusion(y[static_cast<std::size_t>(i)], pred) += 1;
  }
  r.per_class = Eigen::VectorXd::Zero(classes);
  int correct = 0;
  for (int k = 0; k < classes; ++k) {
    const int row_total = r.confusion.row(k).sum();
    if (row_total > 0) {
      r.per_class(k) =
          static_cast<double>(r.confusion(k, k)) / row_total;
    }
    correct += r.confusion(k, k);
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(x.rows());
  return r;
}

EvalRecord Trainer::evaluate_now() const {
  EvalRecord rec;
  rec.step = step_;
  rec.source_accuracy =
      evaluate(data_->source_test_x, data_->source_test_y).accuracy;
  rec.target_accuracy =
      evaluate(data_->target_test_x, data_->target_test_y).accuracy;
  return rec;
}

Matrix Trainer::fused_features(const Matrix& x) const {
  Tape tape;
  ModelOnTape mot(model_, tape);
  return mot.forward(x, nullptr, config_.use_saa).fused.value();
}

namespace {

void write_matrix(std::ostream& out, const char* name, const Matrix& m) {
  char buf[64];
  out << name << ' ' << m.rows() << ' ' << m.cols();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      out << ' ' << buf;
    }
  }
  out << '\n';
}

Matrix read_matrix(std::istream& in, const std::string& expected_name) {
  std::string name;
  Eigen::Index rows = 0, cols = 0;
  in >> name >> rows >> cols;
  if (name != expected_name) {
    throw ConfigError("trainer state: expected '" + expected_name +
                      "', found '" + name + "'");
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) in >> m(i, j);
  }
  return m;
}

}  // namespace

void Trainer::save_checkpoint(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  save_weights_csv(model_, dir + "/model.csv");

  std::ofstream out(dir + "/trainer_state.txt");
  if (!out) throw ConfigError("cannot write trainer state in " + dir);
  out << "step " << step_ << '\n';
  out << "lr_reset " << lr_reset_step_ << '\n';
  out << "rng " << rng_ << '\n';
  out << "velocity " << velocity_.size() << '\n';
  for (const auto& [name, v] : velocity_) write_matrix(out, name.c_str(), v);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", centroids_.momentum);
  out << "centroid_momentum " << buf << '\n';
  write_matrix(out, "centroid_source", centroids_.source);
  write_matrix(out, "centroid_target", centroids_.target);
  out << "source_seen";
  for (bool b : centroids_.source_seen) out << ' ' << (b ? 1 : 0);
  out << "\ntarget_seen";
  for (bool b : centroids_.target_seen) out << ' ' << (b ? 1 : 0);
  out << "\npseudo_centers " << (pseudo_centers_ ? 1 : 0) << '\n';
  if (pseudo_centers_) {
    std::snprintf(buf, sizeof(buf), "%.17g", pseudo_centers_->temperature);
    out << "temperature " << buf << '\n';
    write_matrix(out, "centers", pseudo_centers_->centers);
  }
}

void Trainer::load_checkpoint(const std::string& dir) {
  load_weights_csv(model_, dir + "/model.csv");

  std::ifstream in(dir + "/trainer_state.txt");
  if (!in) throw ConfigError("cannot read trainer state in " + dir);
  std::string key;
  in >> key >> step_;
  in >> key >> lr_reset_step_;
  in >> key;
  in >> rng_;
  std::size_t n = 0;
  in >> key >> n;
  velocity_.clear();
  for (std::size_t i = 0; i < n; ++i) {
    std::string name;
    Eigen::Index rows = 0, cols = 0;
    in >> name >> rows >> cols;
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) in >> m(r, c);
    }
    velocity_[name] = std::move(m);
  }
  in >> key >> centroids_.momentum;
  centroids_.source = read_matrix(in, "centroid_source");
  centroids_.target = read_matrix(in, "centroid_target");
  const int classes = centroids_.classes();
  centroids_.source_seen.assign(static_cast<std::size_t>(classes), false);
  centroids_.target_seen.assign(static_cast<std::size_t>(classes), false);
  in >> key;
  for (int k = 0; k < classes; ++k) {
    int b = 0;
    in >> b;
    centroids_.source_seen[static_cast<std::size_t>(k)] = b != 0;
  }
  in >> key;
  for (int k = 0; k < classes; ++k) {
    int b = 0;
    in >> b;
    centroids_.target_seen[static_cast<std::size_t>(k)] = b != 0;
  }
  int has_centers = 0;
  in >> key >> has_centers;
  if (has_centers) {
    PrototypeSet set;
    in >> key >> set.temperature;
    set.centers = read_matrix(in, "centers");
    pseudo_centers_ = std::move(set);
  } else {
    pseudo_centers_.reset();
  }
  if (!in) throw ConfigError("truncated trainer state in " + dir);
}

void write_training_log_csv(const std::string& path,
                            const std::vector<LossReport>& log) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write training log: " + path);
  out << "step,source,ce,aac,pl,con,ca,total,lr\n";
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << ',' << buf;
  };
  for (const LossReport& r : log) {
    out << r.step;
    put(r.source);
    put(r.ce);
    put(r.aac);
    put(r.pl);
    put(r.con);
    put(r.ca);
    put(r.total);
    put(r.lr);
    out << '\n';
  }
}

void write_eval_csv(const std::string& path,
                    const std::vector<EvalRecord>& evals) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write eval log: " + path);
  out << "step,source_accuracy,target_accuracy\n";
  char buf[64];
  for (const EvalRecord& r : evals) {
    out << r.step;
    std::snprintf(buf, sizeof(buf), "%.17g", r.source_accuracy);
    out << ',' << buf;
    std::snprintf(buf, sizeof(buf), "%.17g", r.target_accuracy);
    out << ',' << buf << '\n';
  }
}

void write_confusion_csv(const std::string& path, const EvalResult& result) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write confusion matrix: " + path);
  for (Eigen::Index i = 0; i < result.confusion.rows(); ++i) {
    for (Eigen::Index j = 0; j < result.confusion.cols(); ++j) {
      if (j) out << ',';
      out << result.confusion(i, j);
    }
    out << '\n';
  }
}

}  // namespace aglp
