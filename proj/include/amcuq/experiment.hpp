#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "amcuq/common.hpp"
#include "amcuq/ensemble.hpp"
#include "amcuq/nncore.hpp"
#include "amcuq/siggen.hpp"
#include "amcuq/uqmetrics.hpp"

namespace amcuq::exp {

inline constexpr int kConfigVersion = 1;

enum class System { standalone, equal_ensemble, weighted_ensemble };
std::string_view to_string(System s) noexcept;
System parse_system(std::string_view s);

enum class Stage { generate, train, evaluate, attack, report };
std::string_view to_string(Stage s) noexcept;
Stage parse_stage(std::string_view s);
inline constexpr Stage kAllStages[] = {Stage::generate, Stage::train, Stage::evaluate, Stage::attack, Stage::report};

struct DatasetSpec {
  std::vector<std::string> schemes;
  std::vector<double> snr_db;
  std::size_t frames_per_cell = 500;
  std::size_t frame_length = 128;
  siggen::Fading fading = siggen::Fading::identity;
  double test_fraction = 0.2;
};

struct ModelSpec {
  /// "desk" or "full".
  std::string architecture = "desk";
  Precision precision = Precision::f64;

  std::vector<nn::LayerSpec> layer_specs(std::size_t num_classes, std::size_t frame_length) const;
};

struct AttackSpec {
  bool enabled = true;
  std::size_t surrogate_member = 0;
  /// PNR held constant across the SNR grid.
  double fixed_pnr_db = 5.0;
  /// SNR slice for the PNR sweep; must be on the grid.
  double fixed_snr_db = 10.0;
  std::vector<double> pnr_sweep_db = {-20.0, -15.0, -10.0, -5.0, 0.0};
};

struct ExperimentConfig {
  int schema_version = kConfigVersion;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  DatasetSpec dataset;
  ModelSpec model;
  nn::TrainConfig train;
  std::size_t members = 5;
  std::vector<System> systems = {System::standalone, System::equal_ensemble, System::weighted_ensemble};
  /// ci.z_alpha is always derived from ci.alpha.
  uq::ReportConfig metrics;
  AttackSpec attack;
  std::filesystem::path output_dir = "run";

  /// Throws ErrorCode::config with the offending key.
  void validate() const;
  /// Canonical JSON text; the config hash is taken over it.
  std::string canonical() const;
  std::uint64_t hash() const;

  static ExperimentConfig parse(const std::string& yaml_text);
  static ExperimentConfig load(const std::filesystem::path& path);
};

struct Overrides {
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;
  std::optional<Precision> precision;
};

ExperimentConfig apply(ExperimentConfig cfg, const Overrides& o);

/// Seeds of every random stream, all derived from the root seed.
struct SeedPlan {
  std::uint64_t dataset = 0;
  std::uint64_t split = 0;
  std::map<System, std::uint64_t> systems;

  static SeedPlan from(std::uint64_t root);
};

struct RunManifest {
  std::string stage;
  std::string version;
  std::string config_hash;
  std::uint64_t root_seed = 0;
  std::map<std::string, std::uint64_t> seeds;
  std::vector<std::string> artifacts;
  double wall_seconds = 0.0;
  std::map<std::string, std::string> notes;

  std::string to_json() const;
};

/// Artifact layout under the output directory.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path train_set() const { return root / "data" / "train.sigset"; }
  std::filesystem::path test_set() const { return root / "data" / "test.sigset"; }
  std::filesystem::path system_manifest(System s) const;
  std::filesystem::path clean_csv() const { return root / "metrics" / "clean.csv"; }
  std::filesystem::path clean_json() const { return root / "metrics" / "clean.json"; }
  std::filesystem::path fixed_pnr_csv() const { return root / "attack" / "fixed_pnr.csv"; }
  std::filesystem::path fixed_pnr_json() const { return root / "attack" / "fixed_pnr.json"; }
  std::filesystem::path fixed_snr_csv() const { return root / "attack" / "fixed_snr.csv"; }
  std::filesystem::path fixed_snr_json() const { return root / "attack" / "fixed_snr.json"; }
  std::filesystem::path report_dir() const { return root / "report"; }
  std::filesystem::path manifest(Stage s) const;
};

/// Runs one stage; each stage reads the artifacts of the ones before it and
/// writes a RunManifest.
RunManifest run_stage(Stage stage, const ExperimentConfig& cfg);

/// Process exit code for an error class: 2 config, 3 missing artifact,
/// 4 divergence, 1 anything else.
int exit_code(ErrorCode code) noexcept;

}  // namespace amcuq::exp
