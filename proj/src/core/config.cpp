#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "amcuq/experiment.hpp"

namespace amcuq::exp {

namespace {

[[noreturn]] void config_error(const std::string& key, const std::string& what) {
  fail(ErrorCode::config, "config: " + key + ": " + what);
}

// Rejects keys outside `allowed` so typos do not silently fall back to defaults.
void check_keys(const YAML::Node& node, const std::string& where, std::initializer_list<std::string_view> allowed) {
  if (!node.IsMap()) config_error(where, "expected a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      config_error(where.empty() ? key : where + "." + key, "unknown key");
    }
  }
}

template <class T>
void read(const YAML::Node& node, const std::string& key, const std::string& where, T& out) {
  const auto v = node[key];
  if (!v) return;
  try {
    out = v.as<T>();
  } catch (const YAML::Exception&) {
    config_error(where.empty() ? key : where + "." + key, "wrong type");
  }
}

std::vector<double> read_snr_grid(const YAML::Node& v) {
  if (v.IsSequence()) return v.as<std::vector<double>>();
  check_keys(v, "dataset.snr_db", {"start", "stop", "step"});
  const auto start = v["start"].as<double>();
  const auto stop = v["stop"].as<double>();
  const auto step = v["step"].as<double>();
  if (!(step > 0.0) || stop < start) config_error("dataset.snr_db", "need start <= stop and step > 0");
  std::vector<double> grid;
  for (std::size_t k = 0;; ++k) {
    const double s = start + static_cast<double>(k) * step;
    if (s > stop + 1e-9 * step) break;
    grid.push_back(s);
  }
  return grid;
}

}  // namespace

std::string_view to_string(System s) noexcept {
  switch (s) {
    case System::standalone: return "standalone";
    case System::equal_ensemble: return "equal_ensemble";
    case System::weighted_ensemble: return "weighted_ensemble";
  }
  return "unknown";
}

System parse_system(std::string_view s) {
  if (s == "standalone") return System::standalone;
  if (s == "equal_ensemble") return System::equal_ensemble;
  if (s == "weighted_ensemble") return System::weighted_ensemble;
  config_error("ensemble.systems", "unknown system '" + std::string(s) + "'");
}

std::string_view to_string(Stage s) noexcept {
  switch (s) {
    case Stage::generate: return "generate";
    case Stage::train: return "train";
    case Stage::evaluate: return "evaluate";
    case Stage::attack: return "attack";
    case Stage::report: return "report";
  }
  return "unknown";
}

Stage parse_stage(std::string_view s) {
  for (auto st : kAllStages) {
    if (to_string(st) == s) return st;
  }
  fail(ErrorCode::invalid_argument, "unknown stage '" + std::string(s) + "'");
}

std::vector<nn::LayerSpec> ModelSpec::layer_specs(std::size_t num_classes, std::size_t frame_length) const {
  if (architecture == "desk") return nn::Architecture::desk(num_classes, frame_length).layer_specs();
  if (architecture == "full") return nn::Architecture::full(num_classes, frame_length).layer_specs();
  config_error("model.architecture", "expected desk or full, got '" + architecture + "'");
}

void ExperimentConfig::validate() const {
  if (schema_version != kConfigVersion) {
    fail(ErrorCode::config, "config: schema_version " + std::to_string(schema_version) + " is not supported (expected " +
                                std::to_string(kConfigVersion) + ")");
  }
  if (workers == 0) config_error("workers", "must be >= 1");
  if (dataset.schemes.empty()) config_error("dataset.schemes", "at least one scheme required");
  for (const auto& s : dataset.schemes) {
    try {
      siggen::scheme_by_name(s);
    } catch (const Error& e) {
      config_error("dataset.schemes", e.what());
    }
  }
  if (std::set<std::string>(dataset.schemes.begin(), dataset.schemes.end()).size() != dataset.schemes.size()) {
    config_error("dataset.schemes", "duplicate scheme");
  }
  if (dataset.snr_db.empty()) config_error("dataset.snr_db", "at least one SNR required");
  for (double s : dataset.snr_db) {
    if (!std::isfinite(s)) config_error("dataset.snr_db", "values must be finite");
  }
  if (std::set<double>(dataset.snr_db.begin(), dataset.snr_db.end()).size() != dataset.snr_db.size()) {
    config_error("dataset.snr_db", "duplicate SNR");
  }
  if (dataset.frames_per_cell < 2) config_error("dataset.frames_per_cell", "must be >= 2 for the split");
  if (dataset.frame_length == 0) config_error("dataset.frame_length", "must be positive");
  if (!(dataset.test_fraction > 0.0 && dataset.test_fraction < 1.0)) {
    config_error("dataset.test_fraction", "must lie in (0, 1)");
  }
  try {
    nn::validate(model.layer_specs(dataset.schemes.size(), dataset.frame_length));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::config) throw;
    config_error("model", std::string("architecture does not fit the frame length: ") + e.what());
  }
  try {
    train.validate();
  } catch (const Error& e) {
    config_error("train", e.what());
  }
  if (members == 0) config_error("ensemble.members", "must be >= 1");
  if (systems.empty()) config_error("ensemble.systems", "at least one system must be selected");
  if (std::set<System>(systems.begin(), systems.end()).size() != systems.size()) {
    config_error("ensemble.systems", "duplicate system");
  }
  const bool weighted = std::find(systems.begin(), systems.end(), System::weighted_ensemble) != systems.end();
  if (weighted && members > dataset.snr_db.size()) {
    config_error("ensemble.members", "weighted_ensemble needs members <= number of SNR values");
  }
  if (!(metrics.ci.alpha > 0.0 && metrics.ci.alpha < 1.0)) config_error("metrics.alpha", "must lie in (0, 1)");
  if (metrics.ece.bin_count == 0) config_error("metrics.ece_bins", "must be >= 1");
  if (metrics.histogram_bins == 0) config_error("metrics.histogram_bins", "must be >= 1");
  if (attack.enabled) {
    if (attack.surrogate_member >= members) config_error("attack.surrogate_member", "must be < ensemble.members");
    if (std::find(dataset.snr_db.begin(), dataset.snr_db.end(), attack.fixed_snr_db) == dataset.snr_db.end()) {
      config_error("attack.fixed_snr_db", "must be one of dataset.snr_db");
    }
    if (attack.pnr_sweep_db.empty()) config_error("attack.pnr_sweep_db", "at least one PNR required");
  }
}

std::string ExperimentConfig::canonical() const {
  nlohmann::json j;
  j["schema_version"] = schema_version;
  j["seed"] = seed;
  j["dataset"] = {{"schemes", dataset.schemes},
                  {"snr_db", dataset.snr_db},
                  {"frames_per_cell", dataset.frames_per_cell},
                  {"frame_length", dataset.frame_length},
                  {"fading", siggen::to_string(dataset.fading)},
                  {"test_fraction", dataset.test_fraction}};
  j["model"] = {{"architecture", model.architecture}, {"precision", std::string(to_string(model.precision))}};
  j["train"] = {
      {"epochs", train.epochs}, {"batch_size", train.batch_size}, {"learning_rate", train.learning_rate}};
  std::vector<std::string> names;
  for (auto s : systems) names.emplace_back(to_string(s));
  j["ensemble"] = {{"members", members}, {"systems", names}};
  j["metrics"] = {{"alpha", metrics.ci.alpha},
                  {"ece_bins", metrics.ece.bin_count},
                  {"histogram_bins", metrics.histogram_bins},
                  {"high_confidence_threshold", metrics.high_confidence_threshold}};
  j["attack"] = {{"enabled", attack.enabled},
                 {"surrogate_member", attack.surrogate_member},
                 {"fixed_pnr_db", attack.fixed_pnr_db},
                 {"fixed_snr_db", attack.fixed_snr_db},
                 {"pnr_sweep_db", attack.pnr_sweep_db}};
  // Output location and worker count do not change results.
  return j.dump();
}

std::uint64_t ExperimentConfig::hash() const {
  // FNV-1a 64.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ExperimentConfig ExperimentConfig::parse(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    fail(ErrorCode::config, std::string("config: YAML parse error: ") + e.what());
  }
  if (!root || root.IsNull()) fail(ErrorCode::config, "config: empty document");
  check_keys(root, "",
             {"schema_version", "seed", "workers", "output_dir", "dataset", "model", "train", "ensemble", "metrics",
              "attack"});
  if (!root["schema_version"]) config_error("schema_version", "missing");

  ExperimentConfig cfg;
  cfg.dataset.schemes.clear();
  read(root, "schema_version", "", cfg.schema_version);
  if (cfg.schema_version != kConfigVersion) cfg.validate();
  read(root, "seed", "", cfg.seed);
  read(root, "workers", "", cfg.workers);
  std::string out = cfg.output_dir.string();
  read(root, "output_dir", "", out);
  cfg.output_dir = out;

  if (auto d = root["dataset"]) {
    check_keys(d, "dataset", {"schemes", "snr_db", "frames_per_cell", "frame_length", "fading", "test_fraction"});
    read(d, "schemes", "dataset", cfg.dataset.schemes);
    if (auto s = d["snr_db"]) {
      try {
        cfg.dataset.snr_db = read_snr_grid(s);
      } catch (const YAML::Exception&) {
        config_error("dataset.snr_db", "expected a list or {start, stop, step}");
      }
    }
    read(d, "frames_per_cell", "dataset", cfg.dataset.frames_per_cell);
    read(d, "frame_length", "dataset", cfg.dataset.frame_length);
    std::string fading = "identity";
    read(d, "fading", "dataset", fading);
    try {
      cfg.dataset.fading = siggen::parse_fading(fading);
    } catch (const Error& e) {
      config_error("dataset.fading", e.what());
    }
    read(d, "test_fraction", "dataset", cfg.dataset.test_fraction);
  }
  if (cfg.dataset.schemes.empty()) {
    for (const auto& s : siggen::default_schemes()) cfg.dataset.schemes.push_back(s.name);
  }
  if (cfg.dataset.snr_db.empty()) cfg.dataset.snr_db = {-10, -6, -2, 2, 6, 10, 14, 18};

  if (auto m = root["model"]) {
    check_keys(m, "model", {"architecture", "precision"});
    read(m, "architecture", "model", cfg.model.architecture);
    std::string p = "f64";
    read(m, "precision", "model", p);
    try {
      cfg.model.precision = parse_precision(p);
    } catch (const Error& e) {
      config_error("model.precision", e.what());
    }
  }
  if (auto t = root["train"]) {
    check_keys(t, "train", {"epochs", "batch_size", "learning_rate"});
    read(t, "epochs", "train", cfg.train.epochs);
    read(t, "batch_size", "train", cfg.train.batch_size);
    read(t, "learning_rate", "train", cfg.train.learning_rate);
  }
  if (auto e = root["ensemble"]) {
    check_keys(e, "ensemble", {"members", "systems"});
    read(e, "members", "ensemble", cfg.members);
    if (e["systems"]) {
      std::vector<std::string> names;
      read(e, "systems", "ensemble", names);
      cfg.systems.clear();
      for (const auto& n : names) cfg.systems.push_back(parse_system(n));
    }
  }
  double alpha = 0.05;
  if (auto m = root["metrics"]) {
    check_keys(m, "metrics", {"alpha", "ece_bins", "histogram_bins", "high_confidence_threshold"});
    read(m, "alpha", "metrics", alpha);
    read(m, "ece_bins", "metrics", cfg.metrics.ece.bin_count);
    read(m, "histogram_bins", "metrics", cfg.metrics.histogram_bins);
    read(m, "high_confidence_threshold", "metrics", cfg.metrics.high_confidence_threshold);
  }
  if (!(alpha > 0.0 && alpha < 1.0)) config_error("metrics.alpha", "must lie in (0, 1)");
  cfg.metrics.ci = ensemble::CIConfig::from_alpha(alpha);

  if (auto a = root["attack"]) {
    check_keys(a, "attack", {"enabled", "surrogate_member", "fixed_pnr_db", "fixed_snr_db", "pnr_sweep_db"});
    read(a, "enabled", "attack", cfg.attack.enabled);
    read(a, "surrogate_member", "attack", cfg.attack.surrogate_member);
    read(a, "fixed_pnr_db", "attack", cfg.attack.fixed_pnr_db);
    read(a, "fixed_snr_db", "attack", cfg.attack.fixed_snr_db);
    read(a, "pnr_sweep_db", "attack", cfg.attack.pnr_sweep_db);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::config, "config: cannot read " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

ExperimentConfig apply(ExperimentConfig cfg, const Overrides& o) {
  if (o.output_dir) cfg.output_dir = *o.output_dir;
  if (o.workers) cfg.workers = *o.workers;
  if (o.seed) cfg.seed = *o.seed;
  if (o.precision) cfg.model.precision = *o.precision;
  cfg.validate();
  return cfg;
}

int exit_code(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::config: return 2;
    case ErrorCode::missing_artifact: return 3;
    case ErrorCode::divergence: return 4;
    default: return 1;
  }
}

}  // namespace amcuq::exp
