#include "amcuq/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>

#include "amcuq/adversarial.hpp"
#include "amcuq/dataset.hpp"
#include "report.hpp"

namespace amcuq::exp {

namespace fs = std::filesystem;

namespace {

constexpr double kClean = std::numeric_limits<double>::quiet_NaN();

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorCode::io, "failed writing " + path.string());
}

void require(const fs::path& p, Stage producer) {
  if (!fs::exists(p)) {
    fail(ErrorCode::missing_artifact,
         p.string() + " not found; run the '" + std::string(to_string(producer)) + "' stage first");
  }
}

std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

ensemble::EnsembleModel load_system(const Layout& layout, System s) {
  const auto path = layout.system_manifest(s);
  require(path, Stage::train);
  return ensemble::load_ensemble(path);
}

adv::Surrogate surrogate_for(System s, const AttackSpec& spec) {
  if (s == System::standalone) return {adv::Surrogate::Kind::standalone, 0};
  return {adv::Surrogate::Kind::member, spec.surrogate_member};
}

std::string rel(const Layout& layout, const fs::path& p) { return fs::relative(p, layout.root).generic_string(); }

void stage_generate(const ExperimentConfig& cfg, const Layout& layout, const SeedPlan& seeds, RunManifest& m) {
  std::vector<siggen::ModulationScheme> schemes;
  for (const auto& name : cfg.dataset.schemes) schemes.push_back(siggen::scheme_by_name(name));
  const auto ds = siggen::generate_frames(schemes, cfg.dataset.snr_db, cfg.dataset.frames_per_cell,
                                          cfg.dataset.frame_length, seeds.dataset, cfg.dataset.fading);
  const auto parts = dataset::split(ds, cfg.dataset.test_fraction, seeds.split);
  fs::create_directories(layout.train_set().parent_path());
  dataset::save(parts.train, layout.train_set());
  dataset::save(parts.test, layout.test_set());
  m.artifacts = {rel(layout, layout.train_set()), rel(layout, layout.test_set())};
  m.notes["train_frames"] = std::to_string(parts.train.size());
  m.notes["test_frames"] = std::to_string(parts.test.size());
}

void stage_train(const ExperimentConfig& cfg, const Layout& layout, const SeedPlan& seeds, RunManifest& m) {
  require(layout.train_set(), Stage::generate);
  const auto train = dataset::load(layout.train_set());
  const auto specs = cfg.model.layer_specs(train.num_classes(), train.frame_length);
  m.notes["flops"] = std::to_string(nn::flop_count(specs));
  for (auto s : cfg.systems) {
    const auto seed = seeds.systems.at(s);
    ensemble::EnsembleModel model;
    switch (s) {
      case System::standalone:
        model = ensemble::train_ensemble(train, 1, specs, cfg.model.precision, cfg.train, seed, 1);
        break;
      case System::equal_ensemble:
        model = ensemble::train_ensemble(train, cfg.members, specs, cfg.model.precision, cfg.train, seed,
                                         cfg.workers);
        break;
      case System::weighted_ensemble:
        // The training split doubles as the calibration set for the weights.
        model = ensemble::train_snr_weighted(train, train, cfg.members, specs, cfg.model.precision, cfg.train, seed,
                                             cfg.workers);
        break;
    }
    const auto path = layout.system_manifest(s);
    fs::create_directories(path.parent_path());
    ensemble::save_ensemble(model, path);
    m.artifacts.push_back(rel(layout, path));
  }
}

void stage_evaluate(const ExperimentConfig& cfg, const Layout& layout, RunManifest& m) {
  require(layout.test_set(), Stage::generate);
  const auto test = dataset::load(layout.test_set());
  std::vector<uq::ReportRow> rows;
  for (auto s : cfg.systems) {
    const auto model = load_system(layout, s);
    const auto batch = uq::score(model, test, cfg.workers);
    auto r = uq::report_by_snr(batch, cfg.metrics, std::string(to_string(s)), kClean, 0.0);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  fs::create_directories(layout.clean_csv().parent_path());
  uq::write_csv(rows, layout.clean_csv());
  uq::write_json(rows, layout.clean_json());
  m.artifacts = {rel(layout, layout.clean_csv()), rel(layout, layout.clean_json())};
}

void stage_attack(const ExperimentConfig& cfg, const Layout& layout, RunManifest& m) {
  m.notes["label_mode"] = "true";
  if (!cfg.attack.enabled) {
    m.notes["attack"] = "disabled";
    return;
  }
  require(layout.test_set(), Stage::generate);
  const auto test = dataset::load(layout.test_set());
  const auto slice = dataset::select_snr(test, cfg.attack.fixed_snr_db);

  std::vector<uq::ReportRow> over_snr;
  std::vector<uq::ReportRow> over_pnr;
  for (auto s : cfg.systems) {
    const auto model = load_system(layout, s);
    const auto name = std::string(to_string(s));
    adv::AttackConfig a;
    a.surrogate = surrogate_for(s, cfg.attack);
    m.notes["surrogate." + name] = a.surrogate.to_string();

    a.target_pnr_db = cfg.attack.fixed_pnr_db;
    auto r = adv::evaluate_under_attack(model, test, a, cfg.metrics, name, cfg.workers).rows;
    over_snr.insert(over_snr.end(), r.begin(), r.end());

    for (double pnr : cfg.attack.pnr_sweep_db) {
      a.target_pnr_db = pnr;
      auto sweep = adv::evaluate_under_attack(model, slice, a, cfg.metrics, name, cfg.workers).rows;
      over_pnr.insert(over_pnr.end(), sweep.begin(), sweep.end());
    }
  }
  fs::create_directories(layout.fixed_pnr_csv().parent_path());
  uq::write_csv(over_snr, layout.fixed_pnr_csv());
  uq::write_json(over_snr, layout.fixed_pnr_json());
  uq::write_csv(over_pnr, layout.fixed_snr_csv());
  uq::write_json(over_pnr, layout.fixed_snr_json());
  m.artifacts = {rel(layout, layout.fixed_pnr_csv()), rel(layout, layout.fixed_pnr_json()),
                 rel(layout, layout.fixed_snr_csv()), rel(layout, layout.fixed_snr_json())};
}

void stage_report(const ExperimentConfig& cfg, const Layout& layout, RunManifest& m) {
  require(layout.clean_json(), Stage::evaluate);
  const auto clean = uq::read_json(layout.clean_json());
  const auto dir = layout.report_dir();
  fs::create_directories(dir);
  auto emit = [&](const std::string& name, const std::string& text) {
    write_text(dir / name, text);
    m.artifacts.push_back(rel(layout, dir / name));
  };
  emit("clean_metrics.csv", uq::to_csv(clean));
  emit("uq_metrics.svg", svg::metric_panels(clean, "UQ metrics vs SNR"));
  emit("ci_widths.svg", svg::ci_width_violins(clean, "CI widths, correct vs incorrect"));
  if (cfg.attack.enabled) {
    require(layout.fixed_pnr_json(), Stage::attack);
    require(layout.fixed_snr_json(), Stage::attack);
    const auto over_snr = uq::read_json(layout.fixed_pnr_json());
    const auto over_pnr = uq::read_json(layout.fixed_snr_json());
    char title[96];
    std::snprintf(title, sizeof title, "Accuracy at constant PNR %g dB", cfg.attack.fixed_pnr_db);
    emit("attack_fixed_pnr.csv", uq::to_csv(over_snr));
    emit("attack_fixed_pnr.svg", svg::attack_over_snr(over_snr, clean, title));
    std::snprintf(title, sizeof title, "Accuracy vs PNR at SNR %g dB", cfg.attack.fixed_snr_db);
    emit("attack_fixed_snr.csv", uq::to_csv(over_pnr));
    emit("attack_fixed_snr.svg", svg::attack_over_pnr(over_pnr, clean, cfg.attack.fixed_snr_db, title));
  }
}

}  // namespace

SeedPlan SeedPlan::from(std::uint64_t root) {
  SeedPlan p;
  p.dataset = derive_seed(root, 1);
  p.split = derive_seed(root, 2);
  p.systems[System::standalone] = derive_seed(root, 3);
  p.systems[System::equal_ensemble] = derive_seed(root, 4);
  p.systems[System::weighted_ensemble] = derive_seed(root, 5);
  return p;
}

std::string RunManifest::to_json() const {
  nlohmann::json j;
  j["stage"] = stage;
  j["version"] = version;
  j["config_hash"] = config_hash;
  j["root_seed"] = root_seed;
  j["seeds"] = seeds;
  j["artifacts"] = artifacts;
  j["wall_seconds"] = wall_seconds;
  j["notes"] = notes;
  return j.dump(2) + "\n";
}

fs::path Layout::system_manifest(System s) const {
  return root / "models" / (std::string(to_string(s)) + ".ensemble.json");
}

fs::path Layout::manifest(Stage s) const { return root / "manifests" / (std::string(to_string(s)) + ".json"); }

RunManifest run_stage(Stage stage, const ExperimentConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const Layout layout{cfg.output_dir};
  const auto seeds = SeedPlan::from(cfg.seed);

  RunManifest m;
  m.stage = std::string(to_string(stage));
  m.version = std::string(kVersion);
  m.config_hash = hex(cfg.hash());
  m.root_seed = cfg.seed;
  m.seeds["dataset"] = seeds.dataset;
  m.seeds["split"] = seeds.split;
  for (const auto& [s, v] : seeds.systems) m.seeds[std::string(to_string(s))] = v;

  fs::create_directories(layout.root);
  switch (stage) {
    case Stage::generate: stage_generate(cfg, layout, seeds, m); break;
    case Stage::train: stage_train(cfg, layout, seeds, m); break;
    case Stage::evaluate: stage_evaluate(cfg, layout, m); break;
    case Stage::attack: stage_attack(cfg, layout, m); break;
    case Stage::report: stage_report(cfg, layout, m); break;
  }
  m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_text(layout.manifest(stage), m.to_json());
  return m;
}

}  // namespace amcuq::exp
