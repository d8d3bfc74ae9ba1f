#pragma once

#include <string>

#include <nlohmann/json_fwd.hpp>

#include "aglp/data.hpp"
#include "aglp/model.hpp"
#include "aglp/trainer.hpp"

// Experiment configuration: dataset parameters, network dimensions, and
// trainer settings, round-tripping losslessly through JSON. Unknown keys
// are rejected so typos fail loudly. Seed and output directory come from
// the command line, not the config file.

namespace aglp {

struct NetworkSpec {
  std::vector<int> extractor_hidden = {64};
  int feature_dim = 64;
  int dsa_hidden = 32;
  int dsa_out = 16;
  std::vector<int> gcn_dims = {32, 16};
  double dropout = 0.2;

  bool operator==(const NetworkSpec&) const = default;
};

struct ExperimentSpec {
  DatasetParams dataset;
  NetworkSpec network;
  TrainerConfig trainer;
  int repeats = 3;
};

bool operator==(const DatasetParams& a, const DatasetParams& b);
bool operator==(const TrainerConfig& a, const TrainerConfig& b);
bool operator==(const ExperimentSpec& a, const ExperimentSpec& b);

// Throws ConfigError on unknown or ill-typed keys.
ExperimentSpec parse_spec(const nlohmann::json& j);
nlohmann::json render_spec(const ExperimentSpec& spec);

ExperimentSpec load_spec_file(const std::string& path);
void save_spec_file(const ExperimentSpec& spec, const std::string& path);

// Network dimensions plus the dataset-derived input/class counts.
ModelConfig model_config_from(const ExperimentSpec& spec);

// Ablation presets: "s+t" (labeled data only), "saa", "ca", "full".
TrainerConfig with_ablation(TrainerConfig config, const std::string& preset);
const std::vector<std::string>& ablation_presets();

}  // namespace aglp
