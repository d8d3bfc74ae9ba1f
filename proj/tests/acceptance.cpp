// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit when
// any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "aglp/config.hpp"
#include "aglp/data.hpp"
#include "aglp/losses.hpp"
#include "aglp/model.hpp"
#include "aglp/prototypes.hpp"
#include "aglp/tape.hpp"
#include "aglp/trainer.hpp"
#include "gradcheck.hpp"

using aglp::Batch;
using aglp::CentroidState;
using aglp::DatasetParams;
using aglp::Matrix;
using aglp::Model;
using aglp::ModelConfig;
using aglp::ModelOnTape;
using aglp::SsdaDataset;
using aglp::Tape;
using aglp::Tensor;
using aglp::Trainer;
using aglp::TrainerConfig;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail = "") {
  std::cout << (ok ? "PASS" : "FAIL") << ": " << name;
  if (!detail.empty()) std::cout << " (" << detail << ")";
  std::cout << std::endl;
  if (!ok) ++failures;
}

Matrix random_matrix(int rows, int cols, std::mt19937_64& rng,
                     double magnitude = 2.0) {
  std::uniform_real_distribution<double> u(-magnitude, magnitude);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = u(rng);
  }
  return m;
}

// --- the standard desk experiment -----------------------------------------

DatasetParams desk_dataset() {
  DatasetParams p;  // K=4, d=2, shift=1.5, rotation=30 deg, 3-shot
  return p;
}

ModelConfig desk_model() {
  ModelConfig m;  // desk defaults: 64/16/32-16
  return m;
}

TrainerConfig desk_trainer() {
  TrainerConfig t;  // desk defaults
  return t;
}

double run_target_accuracy(const DatasetParams& dp, const TrainerConfig& tcfg,
                           std::uint64_t seed, double* source_accuracy,
                           double* seconds) {
  const SsdaDataset data = aglp::make_gaussian_shift(dp, seed);
  TrainerConfig cfg = tcfg;
  cfg.seed = seed;
  Trainer trainer(desk_model(), cfg, data);
  const auto start = std::chrono::steady_clock::now();
  trainer.run();
  const auto end = std::chrono::steady_clock::now();
  if (seconds) {
    *seconds = std::chrono::duration<double>(end - start).count();
  }
  if (source_accuracy) {
    *source_accuracy =
        trainer.evaluate(data.source_test_x, data.source_test_y).accuracy;
  }
  return trainer.evaluate(data.target_test_x, data.target_test_y).accuracy;
}

// --- criterion 1: gradient suite -------------------------------------------

bool gradient_suite(std::string& detail) {
  const auto start = std::chrono::steady_clock::now();
  bool ok = true;

  // Individual loss terms on random micro-inputs (<= 8 samples, dim <= 8).
  {
    std::mt19937_64 rng(3);
    const Matrix la = random_matrix(4, 4, rng);
    const Matrix lb = random_matrix(4, 4, rng);
    const Eigen::MatrixXi s =
        aglp::pairwise_pseudo_labels(random_matrix(4, 6, rng), 2);
    Matrix onehot = Matrix::Zero(4, 4);
    for (int i = 0; i < 4; ++i) onehot(i, i) = 1;
    Matrix soft = 0.7 * onehot + Matrix::Constant(4, 4, 0.3 / 4.0);
    const std::vector<int> ys = {0, 1, 2, 3};
    const std::vector<int> yt = {3, 2, 1, 0};
    const CentroidState base_state(4, 4, 0.7);

    using Build = std::function<Tensor(Tape&, Tensor, Tensor)>;
    const std::vector<std::pair<const char*, Build>> cases = {
        {"labeled cross-entropy",
         [&](Tape&, Tensor a, Tensor) {
           return cross_entropy(softmax_rows(a), onehot);
         }},
        {"adapted source loss",
         [&](Tape&, Tensor a, Tensor) {
           return aglp::adapted_source_loss(softmax_rows(a), soft);
         }},
        {"aac",
         [&](Tape&, Tensor a, Tensor b) {
           return aac_loss(softmax_rows(a), softmax_rows(b), s);
         }},
        {"pl",
         [&](Tape&, Tensor a, Tensor b) {
           return pl_loss(softmax_rows(a), softmax_rows(b), 0.2);
         }},
        {"consistency",
         [&](Tape&, Tensor a, Tensor b) {
           return consistency_loss(softmax_rows(a), softmax_rows(b), 0.8);
         }},
        {"centroid alignment",
         [&](Tape&, Tensor a, Tensor b) {
           CentroidState st = base_state;
           return aglp::centroid_alignment_step(st, a, ys, b, yt);
         }},
    };
    for (const auto& [name, build] : cases) {
      Tape tape;
      Tensor a = tape.parameter(la);
      Tensor b = tape.parameter(lb);
      tape.backward(build(tape, a, b));
      gradtest::LossFn f = [&](const std::vector<Matrix>& w) {
        Tape t;
        Tensor pa = t.parameter(w[0]);
        Tensor pb = t.parameter(w[1]);
        return build(t, pa, pb).value()(0, 0);
      };
      const double err = std::max(
          gradtest::rel_error(tape.grad(a),
                              gradtest::finite_difference(f, {la, lb}, 0)),
          gradtest::rel_error(tape.grad(b),
                              gradtest::finite_difference(f, {la, lb}, 1)));
      if (err >= 1e-4) {
        detail = std::string(name) + " rel err " + std::to_string(err);
        ok = false;
      }
    }
  }

  // End-to-end total on a 6-sample micro-batch (2 source, 2 labeled,
  // 2 unlabeled), every parameter of every sub-network.
  {
    DatasetParams dp;
    dp.n_source = 20;
    dp.n_target = 20;
    dp.n_test = 8;
    const SsdaDataset data = aglp::make_gaussian_shift(dp, 12);

    ModelConfig mcfg;
    mcfg.extractor_hidden = {6};
    mcfg.feature_dim = 4;
    mcfg.dsa_hidden = 3;
    mcfg.dsa_out = 2;
    mcfg.gcn_dims = {3, 2};

    TrainerConfig cfg;
    cfg.total_steps = 4;
    cfg.warmup_steps = 1;
    cfg.update_interval = 1;
    cfg.topk = 2;
    cfg.batch_source = 2;
    cfg.batch_labeled = 2;
    cfg.batch_unlabeled = 2;
    cfg.seed = 9;

    Trainer trainer(mcfg, cfg, data);
    trainer.train_step();
    trainer.train_step();
    const Batch batch = trainer.sample_step_batch();
    const aglp::FrozenStep frozen = trainer.make_frozen(batch);
    const CentroidState base_centroids = trainer.centroids();

    std::vector<Matrix> weights;
    for (const auto& [name, w] :
         std::as_const(trainer.model()).named_weights()) {
      weights.push_back(*w);
    }
    gradtest::LossFn f = [&](const std::vector<Matrix>& w) {
      Model m(mcfg, 0);
      auto named = m.named_weights();
      for (std::size_t i = 0; i < named.size(); ++i) *named[i].second = w[i];
      Tape t;
      ModelOnTape mot(m, t);
      CentroidState centroids = base_centroids;
      return aglp::build_step_losses(mot, t, batch, cfg, frozen, &centroids)
          .total.value()(0, 0);
    };

    Tape tape;
    ModelOnTape mot(trainer.model(), tape);
    CentroidState centroids = base_centroids;
    tape.backward(
        aglp::build_step_losses(mot, tape, batch, cfg, frozen, &centroids)
            .total);
    const auto& params = mot.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double err =
          gradtest::rel_error(tape.grad(params[i].node),
                              gradtest::finite_difference(f, weights, i));
      if (err >= 1e-4) {
        detail = "total loss d/d" + params[i].name + " rel err " +
                 std::to_string(err);
        ok = false;
      }
    }
  }

  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - start)
                          .count();
  if (secs >= 30.0) {
    detail = "runtime " + std::to_string(secs) + "s exceeds 30s";
    ok = false;
  }
  if (ok) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "all terms < 1e-4 in %.1fs", secs);
    detail = buf;
  }
  return ok;
}

// --- criterion 2: oracle suite ---------------------------------------------

bool oracle_suite(std::string& detail) {
  // Graph propagation vs dense brute force on 100 random 5-10 node graphs.
  ModelConfig mcfg;
  mcfg.extractor_hidden = {6};
  mcfg.feature_dim = 4;
  mcfg.dsa_hidden = 3;
  mcfg.dsa_out = 3;
  mcfg.gcn_dims = {3, 2};
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    std::mt19937_64 rng(seed);
    const int nodes = 5 + static_cast<int>(seed % 6);
    Model model(mcfg, seed);
    Tape tape;
    ModelOnTape mot(model, tape);
    const auto graph =
        mot.build_graph(mot.extract(random_matrix(nodes, 2, rng)));
    const Matrix s = graph.scores.value();
    const Matrix a =
        s * s.transpose() + Matrix::Identity(nodes, nodes);
    const Eigen::VectorXd dinv =
        a.rowwise().sum().cwiseSqrt().cwiseInverse();
    const Matrix expected = dinv.asDiagonal() * a * dinv.asDiagonal();
    const double err =
        (graph.propagation.value() - expected).cwiseAbs().maxCoeff();
    if (err >= 1e-12) {
      detail = "propagation deviates by " + std::to_string(err);
      return false;
    }
  }

  // Pairwise pseudo-labels vs sort-based brute force on 100 random batches.
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    std::mt19937_64 rng(seed + 500);
    const Matrix f = random_matrix(8, 10, rng);
    const int k = 1 + static_cast<int>(seed % 5);
    const Eigen::MatrixXi s = aglp::pairwise_pseudo_labels(f, k);
    auto topk_set = [&](Eigen::Index row) {
      std::vector<int> idx(10);
      for (int j = 0; j < 10; ++j) idx[static_cast<std::size_t>(j)] = j;
      std::stable_sort(idx.begin(), idx.end(), [&](int x, int y) {
        return f(row, x) > f(row, y);
      });
      return std::set<int>(idx.begin(), idx.begin() + k);
    };
    for (int i = 0; i < 8; ++i) {
      for (int j = 0; j < 8; ++j) {
        if (s(i, j) != (topk_set(i) == topk_set(j) ? 1 : 0)) {
          detail = "pair labels disagree with brute force";
          return false;
        }
      }
    }
  }

  // Prototype means vs brute force.
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed + 900);
    const Matrix f = random_matrix(30, 5, rng);
    std::vector<int> labels(30);
    for (int i = 0; i < 30; ++i) labels[static_cast<std::size_t>(i)] = i % 3;
    const auto set = aglp::compute_prototypes(f, labels, 3, 0.6);
    for (int k = 0; k < 3; ++k) {
      Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(5);
      int n = 0;
      for (int i = 0; i < 30; ++i) {
        if (labels[static_cast<std::size_t>(i)] == k) {
          mean += f.row(i);
          ++n;
        }
      }
      mean /= n;
      if ((set.centers.row(k) - mean).cwiseAbs().maxCoeff() >= 1e-12) {
        detail = "prototype mean deviates from brute force";
        return false;
      }
    }
  }
  detail = "propagation, pair labels, prototypes all match";
  return true;
}

// --- criterion 3: analytic values ------------------------------------------

bool analytic_values(std::string& detail) {
  const aglp::RampSchedule r{3.0, 200};
  if (std::abs(r.weight(0) / r.nu - std::exp(-5.0)) > 1e-12) {
    detail = "ramp w(0)";
    return false;
  }
  if (std::abs(r.weight(100) / r.nu - std::exp(-1.25)) > 1e-12) {
    detail = "ramp w(T/2)";
    return false;
  }
  if (r.weight(200) / r.nu != 1.0) {
    detail = "ramp w(T)";
    return false;
  }

  Tape tape;
  Matrix p = Matrix::Constant(3, 4, 0.25);
  Matrix y = Matrix::Zero(3, 4);
  y(0, 0) = y(1, 1) = y(2, 2) = 1;
  const double ce = cross_entropy(tape.constant(p), y).value()(0, 0);
  if (std::abs(ce - std::log(4.0)) > 1e-12) {
    detail = "uniform CE != ln 4";
    return false;
  }

  CentroidState st(1, 2, 0.7);
  st.target << 3, 4;
  st.source_seen = {true};
  st.target_seen = {true};
  if (aglp::centroid_alignment(st) != 25.0) {
    detail = "centroid (0,0)-(3,4) != 25";
    return false;
  }
  detail = "ramp, ln 4, centroid 25 all exact";
  return true;
}

// --- criterion 4: desk-scale ordering experiment ----------------------------

bool ordering_experiment(std::string& detail) {
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  double worst_seconds = 0.0;
  std::map<std::string, double> means;
  std::string table;
  for (const std::string& preset : aglp::ablation_presets()) {
    const TrainerConfig cfg = aglp::with_ablation(desk_trainer(), preset);
    double sum = 0;
    for (const std::uint64_t seed : seeds) {
      double secs = 0;
      sum += run_target_accuracy(desk_dataset(), cfg, seed, nullptr, &secs);
      worst_seconds = std::max(worst_seconds, secs);
    }
    means[preset] = sum / static_cast<double>(seeds.size());
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s=%.3f ", preset.c_str(),
                  means[preset]);
    table += buf;
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "max %.1fs/run", worst_seconds);
  detail = table + buf;

  if (worst_seconds >= 300.0) return false;
  if (means["full"] < means["s+t"] + 0.05) return false;
  if (means["full"] < means["saa"]) return false;
  if (means["full"] < means["ca"]) return false;
  return true;
}

// --- criterion 5: zero-shift control ----------------------------------------

bool zero_shift_control(std::string& detail) {
  DatasetParams dp = desk_dataset();
  dp.shift = 0.0;
  dp.rotation_deg = 0.0;
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string table;
  bool ok = true;
  for (const std::string& preset : {std::string("s+t"), std::string("full")}) {
    const TrainerConfig cfg = aglp::with_ablation(desk_trainer(), preset);
    double src_sum = 0, tgt_sum = 0;
    for (const std::uint64_t seed : seeds) {
      double src = 0;
      tgt_sum += run_target_accuracy(dp, cfg, seed, &src, nullptr);
      src_sum += src;
    }
    const double gap = std::abs(tgt_sum - src_sum) /
                       static_cast<double>(seeds.size());
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%s gap=%.3f ", preset.c_str(), gap);
    table += buf;
    if (gap > 0.02) ok = false;
  }
  detail = table;
  return ok;
}

// --- criterion 6: determinism -----------------------------------------------

bool determinism(std::string& detail) {
  const auto dir = std::filesystem::temp_directory_path() / "aglp_acc_det";
  std::filesystem::create_directories(dir);
  const SsdaDataset data = aglp::make_gaussian_shift(desk_dataset(), 1);
  TrainerConfig cfg = desk_trainer();
  cfg.seed = 1;
  std::vector<std::string> files;
  for (int run = 0; run < 2; ++run) {
    Trainer trainer(desk_model(), cfg, data);
    const auto result = trainer.run();
    const std::string path =
        (dir / ("log_" + std::to_string(run) + ".csv")).string();
    aglp::write_training_log_csv(path, result.log);
    files.push_back(path);
  }
  auto slurp = [](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const bool ok = slurp(files[0]) == slurp(files[1]);
  std::filesystem::remove_all(dir);
  detail = ok ? "training logs byte-identical" : "training logs differ";
  return ok;
}

// --- criterion 7: ablation soundness -----------------------------------------

bool ablation_soundness(std::string& detail) {
  const SsdaDataset data = aglp::make_gaussian_shift(desk_dataset(), 2);
  TrainerConfig cfg = desk_trainer();
  cfg.use_saa = false;
  cfg.seed = 2;
  cfg.total_steps = std::max(cfg.total_steps, 101);
  Trainer trainer(desk_model(), cfg, data);

  std::vector<std::pair<std::string, Matrix>> before;
  for (const auto& [name, w] :
       std::as_const(trainer.model()).named_weights()) {
    before.emplace_back(name, *w);
  }
  for (int i = 0; i < 100; ++i) trainer.train_step();

  const auto after = std::as_const(trainer.model()).named_weights();
  for (std::size_t i = 0; i < after.size(); ++i) {
    const std::string& name = before[i].first;
    if (name.rfind("dsa.", 0) != 0 && name.rfind("gcn.", 0) != 0) continue;
    if (*after[i].second != before[i].second) {
      detail = name + " changed";
      return false;
    }
  }
  detail = "DSA/GCN weights bit-identical after 100 steps";
  return true;
}

}  // namespace

int main() {
  std::string detail;

  detail.clear();
  report("gradient suite", gradient_suite(detail), detail);

  detail.clear();
  report("oracle suite", oracle_suite(detail), detail);

  detail.clear();
  report("analytic values", analytic_values(detail), detail);

  detail.clear();
  report("ablation soundness", ablation_soundness(detail), detail);

  detail.clear();
  report("determinism", determinism(detail), detail);

  detail.clear();
  report("zero-shift control", zero_shift_control(detail), detail);

  detail.clear();
  report("ordering experiment", ordering_experiment(detail), detail);

  return failures == 0 ? 0 : 1;
}
