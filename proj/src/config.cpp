#include "aglp/config.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "aglp/errors.hpp"

namespace aglp {

using nlohmann::json;

bool operator==(const DatasetParams& a, const DatasetParams& b) {
  return a.classes == b.classes && a.dim == b.dim &&
         a.n_source == b.n_source && a.n_target == b.n_target &&
         a.n_test == b.n_test && a.shots == b.shots && a.shift == b.shift &&
         a.rotation_deg == b.rotation_deg &&
         a.cluster_stddev == b.cluster_stddev && a.radius == b.radius;
}

bool operator==(const TrainerConfig& a, const TrainerConfig& b) {
  return a.total_steps == b.total_steps && a.warmup_steps == b.warmup_steps &&
         a.learning_rate == b.learning_rate && a.lr_decay == b.lr_decay &&
         a.lr_power == b.lr_power && a.momentum == b.momentum &&
         a.beta == b.beta && a.alpha == b.alpha &&
         a.proto_temperature == b.proto_temperature &&
         a.update_interval == b.update_interval && a.tau == b.tau &&
         a.nu == b.nu && a.ramp_steps == b.ramp_steps &&
         a.centroid_momentum == b.centroid_momentum && a.topk == b.topk &&
         a.batch_source == b.batch_source &&
         a.batch_labeled == b.batch_labeled &&
         a.batch_unlabeled == b.batch_unlabeled &&
         a.aug_strength == b.aug_strength &&
         a.eval_interval == b.eval_interval &&
         a.checkpoint_interval == b.checkpoint_interval &&
         a.use_saa == b.use_saa && a.use_ca == b.use_ca &&
         a.use_sla == b.use_sla && a.use_cdac == b.use_cdac &&
         a.seed == b.seed;
}

bool operator==(const ExperimentSpec& a, const ExperimentSpec& b) {
  return a.dataset == b.dataset && a.network == b.network &&
         a.trainer == b.trainer && a.repeats == b.repeats;
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known,
                    const std::string& where) {
  if (!j.is_object()) {
    throw ConfigError("config: '" + where + "' must be an object");
  }
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) {
      throw ConfigError("config: unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config: bad value for '" + std::string(key) +
                      "': " + e.what());
  }
}

}  // namespace

ExperimentSpec parse_spec(const json& j) {
  reject_unknown(j, {"dataset", "network", "trainer", "repeats"}, "top level");
  ExperimentSpec spec;
  read(j, "repeats", spec.repeats);
  if (spec.repeats < 1) throw ConfigError("config: repeats must be >= 1");

  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    reject_unknown(d,
                   {"classes", "dim", "n_source", "n_target", "n_test",
                    "shots", "shift", "rotation_deg", "cluster_stddev",
                    "radius"},
                   "dataset");
    read(d, "classes", spec.dataset.classes);
    read(d, "dim", spec.dataset.dim);
    read(d, "n_source", spec.dataset.n_source);
    read(d, "n_target", spec.dataset.n_target);
    read(d, "n_test", spec.dataset.n_test);
    read(d, "shots", spec.dataset.shots);
    read(d, "shift", spec.dataset.shift);
    read(d, "rotation_deg", spec.dataset.rotation_deg);
    read(d, "cluster_stddev", spec.dataset.cluster_stddev);
    read(d, "radius", spec.dataset.radius);
  }

  if (j.contains("network")) {
    const json& n = j.at("network");
    reject_unknown(n,
                   {"extractor_hidden", "feature_dim", "dsa_hidden",
                    "dsa_out", "gcn_dims", "dropout"},
                   "network");
    read(n, "extractor_hidden", spec.network.extractor_hidden);
    read(n, "feature_dim", spec.network.feature_dim);
    read(n, "dsa_hidden", spec.network.dsa_hidden);
    read(n, "dsa_out", spec.network.dsa_out);
    read(n, "gcn_dims", spec.network.gcn_dims);
    read(n, "dropout", spec.network.dropout);
  }

  if (j.contains("trainer")) {
    const json& t = j.at("trainer");
    reject_unknown(
        t, {"total_steps",      "warmup_steps",    "learning_rate",
            "lr_decay",         "lr_power",        "momentum",
            "beta",             "alpha",           "proto_temperature",
            "update_interval",  "tau",             "nu",
            "ramp_steps",       "centroid_momentum", "topk",
            "batch_source",     "batch_labeled",   "batch_unlabeled",
            "aug_strength",     "eval_interval",   "checkpoint_interval",
            "use_saa",          "use_ca",          "use_sla",
            "use_cdac"},
        "trainer");
    read(t, "total_steps", spec.trainer.total_steps);
    read(t, "warmup_steps", spec.trainer.warmup_steps);
    read(t, "learning_rate", spec.trainer.learning_rate);
    read(t, "lr_decay", spec.trainer.lr_decay);
    read(t, "lr_power", spec.trainer.lr_power);
    read(t, "momentum", spec.trainer.momentum);
    read(t, "beta", spec.trainer.beta);
    read(t, "alpha", spec.trainer.alpha);
    read(t, "proto_temperature", spec.trainer.proto_temperature);
    read(t, "update_interval", spec.trainer.update_interval);
    read(t, "tau", spec.trainer.tau);
    read(t, "nu", spec.trainer.nu);
    read(t, "ramp_steps", spec.trainer.ramp_steps);
    read(t, "centroid_momentum", spec.trainer.centroid_momentum);
    read(t, "topk", spec.trainer.topk);
    read(t, "batch_source", spec.trainer.batch_source);
    read(t, "batch_labeled", spec.trainer.batch_labeled);
    read(t, "batch_unlabeled", spec.trainer.batch_unlabeled);
    read(t, "aug_strength", spec.trainer.aug_strength);
    read(t, "eval_interval", spec.trainer.eval_interval);
    read(t, "checkpoint_interval", spec.trainer.checkpoint_interval);
    read(t, "use_saa", spec.trainer.use_saa);
    read(t, "use_ca", spec.trainer.use_ca);
    read(t, "use_sla", spec.trainer.use_sla);
    read(t, "use_cdac", spec.trainer.use_cdac);
  }
  return spec;
}

json render_spec(const ExperimentSpec& spec) {
  json j;
  j["repeats"] = spec.repeats;
  json& d = j["dataset"];
  d["classes"] = spec.dataset.classes;
  d["dim"] = spec.dataset.dim;
  d["n_source"] = spec.dataset.n_source;
  d["n_target"] = spec.dataset.n_target;
  d["n_test"] = spec.dataset.n_test;
  d["shots"] = spec.dataset.shots;
  d["shift"] = spec.dataset.shift;
  d["rotation_deg"] = spec.dataset.rotation_deg;
  d["cluster_stddev"] = spec.dataset.cluster_stddev;
  d["radius"] = spec.dataset.radius;
  json& n = j["network"];
  n["extractor_hidden"] = spec.network.extractor_hidden;
  n["feature_dim"] = spec.network.feature_dim;
  n["dsa_hidden"] = spec.network.dsa_hidden;
  n["dsa_out"] = spec.network.dsa_out;
  n["gcn_dims"] = spec.network.gcn_dims;
  n["dropout"] = spec.network.dropout;
  json& t = j["trainer"];
  t["total_steps"] = spec.trainer.total_steps;
  t["warmup_steps"] = spec.trainer.warmup_steps;
  t["learning_rate"] = spec.trainer.learning_rate;
  t["lr_decay"] = spec.trainer.lr_decay;
  t["lr_power"] = spec.trainer.lr_power;
  t["momentum"] = spec.trainer.momentum;
  t["beta"] = spec.trainer.beta;
  t["alpha"] = spec.trainer.alpha;
  t["proto_temperature"] = spec.trainer.proto_temperature;
  t["update_interval"] = spec.trainer.update_interval;
  t["tau"] = spec.trainer.tau;
  t["nu"] = spec.trainer.nu;
  t["ramp_steps"] = spec.trainer.ramp_steps;
  t["centroid_momentum"] = spec.trainer.centroid_momentum;
  t["topk"] = spec.trainer.topk;
  t["batch_source"] = spec.trainer.batch_source;
  t["batch_labeled"] = spec.trainer.batch_labeled;
  t["batch_unlabeled"] = spec.trainer.batch_unlabeled;
  t["aug_strength"] = spec.trainer.aug_strength;
  t["eval_interval"] = spec.trainer.eval_interval;
  t["checkpoint_interval"] = spec.trainer.checkpoint_interval;
  t["use_saa"] = spec.trainer.use_saa;
  t["use_ca"] = spec.trainer.use_ca;
  t["use_sla"] = spec.trainer.use_sla;
  t["use_cdac"] = spec.trainer.use_cdac;
  return j;
}

ExperimentSpec load_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: parse error in " + path + ": " + e.what());
  }
  return parse_spec(j);
}

void save_spec_file(const ExperimentSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file: " + path);
  out << render_spec(spec).dump(2) << '\n';
}

ModelConfig model_config_from(const ExperimentSpec& spec) {
  ModelConfig m;
  m.input_dim = spec.dataset.dim;
  m.classes = spec.dataset.classes;
  m.extractor_hidden = spec.network.extractor_hidden;
  m.feature_dim = spec.network.feature_dim;
  m.dsa_hidden = spec.network.dsa_hidden;
  m.dsa_out = spec.network.dsa_out;
  m.gcn_dims = spec.network.gcn_dims;
  m.dropout = spec.network.dropout;
  return m;
}

TrainerConfig with_ablation(TrainerConfig config, const std::string& preset) {
  if (preset == "s+t") {
    config.use_cdac = false;
    config.use_sla = false;
    config.use_saa = false;
    config.use_ca = false;
  } else if (preset == "saa") {
    config.use_cdac = true;
    config.use_sla = true;
    config.use_saa = true;
    config.use_ca = false;
  } else if (preset == "ca") {
    config.use_cdac = true;
    config.use_sla = true;
    config.use_saa = false;
    config.use_ca = true;
  } else if (preset == "full") {
    config.use_cdac = true;
    config.use_sla = true;
    config.use_saa = true;
    config.use_ca = true;
  } else {
    throw ConfigError("unknown ablation preset: " + preset);
  }
  return config;
}

const std::vector<std::string>& ablation_presets() {
  static const std::vector<std::string> presets = {"s+t", "saa", "ca", "full"};
  return presets;
}

}  // namespace aglp
