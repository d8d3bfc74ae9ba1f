// Command-line front end: dataset generation and replay, training runs,
// evaluation, ablation sweeps, and fused-feature dumps for external
// plotting. Every output is reproducible from (config, seed).

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "aglp/config.hpp"
#include "aglp/data.hpp"
#include "aglp/errors.hpp"
#include "aglp/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonArgs {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "experiment config (JSON)")
      ->required();
  cmd->add_option("--seed", args.seed, "base random seed")->required();
  cmd->add_option("--out", args.out, "output directory")->required();
}

void write_manifest(const aglp::ExperimentSpec& spec, std::uint64_t seed,
                    const std::string& path) {
  json m;
  m["seed"] = seed;
  m["spec"] = aglp::render_spec(spec);
  m["labeled_count"] = spec.dataset.shots * spec.dataset.classes;
  m["fused_dim"] = spec.network.feature_dim + spec.network.gcn_dims.back();
  std::ofstream out(path);
  if (!out) throw aglp::ConfigError("cannot write manifest: " + path);
  out << m.dump(2) << '\n';
}

aglp::SsdaDataset obtain_dataset(const aglp::ExperimentSpec& spec,
                                 std::uint64_t seed,
                                 const std::string& data_path) {
  if (!data_path.empty()) return aglp::load_dataset_csv(data_path);
  return aglp::make_gaussian_shift(spec.dataset, seed);
}

int cmd_generate(const CommonArgs& args) {
  const auto spec = aglp::load_spec_file(args.config);
  const auto dataset = aglp::make_gaussian_shift(spec.dataset, args.seed);
  fs::create_directories(args.out);
  aglp::save_dataset_csv(dataset, args.out + "/dataset.csv");
  write_manifest(spec, args.seed, args.out + "/manifest.json");
  std::cout << "wrote " << args.out << "/dataset.csv (|S|="
            << dataset.source_x.rows() << ", |L|=" << dataset.labeled_count()
            << ", |U|=" << dataset.unlabeled_count() << ")\n";
  return kExitOk;
}

struct RunOutcome {
  std::uint64_t seed;
  double target_accuracy;
};

RunOutcome run_one(const aglp::ExperimentSpec& spec,
                   const aglp::TrainerConfig& tcfg,
                   const aglp::SsdaDataset& data, const std::string& dir,
                   bool resume) {
  fs::create_directories(dir);
  aglp::Trainer trainer(aglp::model_config_from(spec), tcfg, data);
  if (resume && fs::exists(dir + "/trainer_state.txt")) {
    trainer.load_checkpoint(dir);
    std::cout << "resuming " << dir << " at step " << trainer.step() << "\n";
  }
  const aglp::RunResult result = trainer.run(dir);
  aglp::write_training_log_csv(dir + "/train_log.csv", result.log);
  aglp::write_eval_csv(dir + "/eval.csv", result.evals);
  const auto final_eval =
      trainer.evaluate(data.target_test_x, data.target_test_y);
  aglp::write_confusion_csv(dir + "/confusion.csv", final_eval);
  return {tcfg.seed, final_eval.accuracy};
}

void write_summary(const std::string& path,
                   const std::vector<std::pair<std::string,
                                               std::vector<RunOutcome>>>&
                       groups) {
  std::ofstream out(path);
  if (!out) throw aglp::ConfigError("cannot write summary: " + path);
  out << "config,seeds,mean_target_accuracy,stdev_target_accuracy\n";
  char buf[64];
  for (const auto& [name, runs] : groups) {
    double mean = 0;
    for (const auto& r : runs) mean += r.target_accuracy;
    mean /= static_cast<double>(runs.size());
    double var = 0;
    for (const auto& r : runs) {
      var += (r.target_accuracy - mean) * (r.target_accuracy - mean);
    }
    var = runs.size() > 1 ? var / static_cast<double>(runs.size() - 1) : 0.0;
    out << name << ',' << runs.size();
    std::snprintf(buf, sizeof(buf), "%.17g", mean);
    out << ',' << buf;
    std::snprintf(buf, sizeof(buf), "%.17g", std::sqrt(var));
    out << ',' << buf << '\n';
  }
}

int cmd_train(const CommonArgs& args, const std::string& data_path,
              bool resume) {
  const auto spec = aglp::load_spec_file(args.config);
  fs::create_directories(args.out);
  write_manifest(spec, args.seed, args.out + "/manifest.json");

  std::vector<RunOutcome> runs;
  for (int r = 0; r < spec.repeats; ++r) {
    const std::uint64_t seed = args.seed + static_cast<std::uint64_t>(r);
    const auto data = obtain_dataset(spec, seed, data_path);
    aglp::TrainerConfig tcfg = spec.trainer;
    tcfg.seed = seed;
    const std::string dir = args.out + "/run_" + std::to_string(seed);
    runs.push_back(run_one(spec, tcfg, data, dir, resume));
    std::cout << "run seed=" << seed
              << " target_accuracy=" << runs.back().target_accuracy << "\n";
  }
  write_summary(args.out + "/summary.csv", {{"train", runs}});
  return kExitOk;
}

int cmd_sweep(const CommonArgs& args, const std::string& data_path) {
  const auto spec = aglp::load_spec_file(args.config);
  fs::create_directories(args.out);
  write_manifest(spec, args.seed, args.out + "/manifest.json");

  std::vector<std::pair<std::string, std::vector<RunOutcome>>> groups;
  for (const std::string& preset : aglp::ablation_presets()) {
    std::vector<RunOutcome> runs;
    for (int r = 0; r < spec.repeats; ++r) {
      const std::uint64_t seed = args.seed + static_cast<std::uint64_t>(r);
      const auto data = obtain_dataset(spec, seed, data_path);
      aglp::TrainerConfig tcfg =
          aglp::with_ablation(spec.trainer, preset);
      tcfg.seed = seed;
      const std::string dir =
          args.out + "/" + preset + "_" + std::to_string(seed);
      runs.push_back(run_one(spec, tcfg, data, dir, false));
      std::cout << preset << " seed=" << seed
                << " target_accuracy=" << runs.back().target_accuracy << "\n";
    }
    groups.emplace_back(preset, std::move(runs));
  }
  write_summary(args.out + "/summary.csv", groups);
  return kExitOk;
}

int cmd_evaluate(const CommonArgs& args, const std::string& data_path,
                 const std::string& checkpoint) {
  const auto spec = aglp::load_spec_file(args.config);
  const auto data = obtain_dataset(spec, args.seed, data_path);
  aglp::TrainerConfig tcfg = spec.trainer;
  tcfg.seed = args.seed;
  aglp::Trainer trainer(aglp::model_config_from(spec), tcfg, data);
  if (!checkpoint.empty()) trainer.load_checkpoint(checkpoint);

  fs::create_directories(args.out);
  const auto record = trainer.evaluate_now();
  aglp::write_eval_csv(args.out + "/eval.csv", {record});
  aglp::write_confusion_csv(
      args.out + "/confusion.csv",
      trainer.evaluate(data.target_test_x, data.target_test_y));
  std::cout << "source_accuracy=" << record.source_accuracy
            << " target_accuracy=" << record.target_accuracy << "\n";
  return kExitOk;
}

int cmd_dump_features(const CommonArgs& args, const std::string& data_path,
                      const std::string& checkpoint,
                      const std::string& split) {
  const auto spec = aglp::load_spec_file(args.config);
  const auto data = obtain_dataset(spec, args.seed, data_path);
  aglp::TrainerConfig tcfg = spec.trainer;
  tcfg.seed = args.seed;
  aglp::Trainer trainer(aglp::model_config_from(spec), tcfg, data);
  if (!checkpoint.empty()) trainer.load_checkpoint(checkpoint);

  struct Block {
    const char* tag;
    const aglp::Matrix* x;
    const std::vector<int>* y;
  };
  std::vector<Block> blocks;
  auto want = [&](const char* tag) { return split == "all" || split == tag; };
  if (want("source")) blocks.push_back({"source", &data.source_x, &data.source_y});
  if (want("labeled")) blocks.push_back({"labeled", &data.labeled_x, &data.labeled_y});
  if (want("unlabeled")) blocks.push_back({"unlabeled", &data.unlabeled_x, nullptr});
  if (want("source_test")) blocks.push_back({"source_test", &data.source_test_x, &data.source_test_y});
  if (want("target_test")) blocks.push_back({"target_test", &data.target_test_x, &data.target_test_y});
  if (blocks.empty()) {
    throw aglp::ConfigError("dump-features: unknown split '" + split + "'");
  }

  fs::create_directories(args.out);
  const std::string path = args.out + "/features.csv";
  std::ofstream out(path);
  if (!out) throw aglp::ConfigError("cannot write features: " + path);
  const int fused_dim = aglp::model_config_from(spec).fused_dim();
  out << "id,domain,label";
  for (int j = 0; j < fused_dim; ++j) out << ",z" << j;
  out << '\n';
  char buf[64];
  int id = 0;
  for (const Block& b : blocks) {
    const aglp::Matrix fused = trainer.fused_features(*b.x);
    for (Eigen::Index i = 0; i < fused.rows(); ++i) {
      out << id++ << ',' << b.tag << ','
          << (b.y ? (*b.y)[static_cast<std::size_t>(i)] : -1);
      for (Eigen::Index j = 0; j < fused.cols(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", fused(i, j));
        out << ',' << buf;
      }
      out << '\n';
    }
  }
  std::cout << "wrote " << path << " (" << id << " rows)\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AGLP semi-supervised domain adaptation experiments"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, sweep_args, eval_args, dump_args;
  std::string train_data, sweep_data, eval_data, dump_data;
  std::string eval_ckpt, dump_ckpt;
  std::string dump_split = "all";
  bool resume = false;

  add_common(app.add_subcommand("generate", "write a synthetic dataset"),
             gen_args);

  CLI::App* train = app.add_subcommand("train", "run seeded trainings");
  add_common(train, train_args);
  train->add_option("--data", train_data, "dataset CSV (default: generate)");
  train->add_flag("--resume", resume, "continue from run checkpoints");

  CLI::App* sweep = app.add_subcommand("sweep", "ablation sweep");
  add_common(sweep, sweep_args);
  sweep->add_option("--data", sweep_data, "dataset CSV (default: generate)");

  CLI::App* eval = app.add_subcommand("evaluate", "evaluate a checkpoint");
  add_common(eval, eval_args);
  eval->add_option("--data", eval_data, "dataset CSV (default: generate)");
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint directory");

  CLI::App* dump =
      app.add_subcommand("dump-features", "export fused features as CSV");
  add_common(dump, dump_args);
  dump->add_option("--data", dump_data, "dataset CSV (default: generate)");
  dump->add_option("--checkpoint", dump_ckpt, "checkpoint directory");
  dump->add_option("--split", dump_split,
                   "source|labeled|unlabeled|source_test|target_test|all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (app.got_subcommand("generate")) return cmd_generate(gen_args);
    if (app.got_subcommand("train"))
      return cmd_train(train_args, train_data, resume);
    if (app.got_subcommand("sweep")) return cmd_sweep(sweep_args, sweep_data);
    if (app.got_subcommand("evaluate"))
      return cmd_evaluate(eval_args, eval_data, eval_ckpt);
    if (app.got_subcommand("dump-features"))
      return cmd_dump_features(dump_args, dump_data, dump_ckpt, dump_split);
  } catch (const aglp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}
