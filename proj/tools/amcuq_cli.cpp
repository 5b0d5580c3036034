// amcuq command line: runs experiment stages from one config file.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>

#include "amcuq/amcuq.h"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;
  std::string precision;
};

int report(amcuq_status s) {
  if (s != AMCUQ_OK) std::fprintf(stderr, "amcuq: %s: %s\n", amcuq_status_name(s), amcuq_last_error());
  return amcuq_exit_code(s);
}

int run(const Options& o, const std::vector<std::string>& stages) {
  amcuq_experiment* exp = nullptr;
  if (auto s = amcuq_experiment_load(o.config.c_str(), &exp); s != AMCUQ_OK) return report(s);
  auto s = AMCUQ_OK;
  if (s == AMCUQ_OK && !o.out.empty()) s = amcuq_experiment_set_output(exp, o.out.c_str());
  if (s == AMCUQ_OK && o.workers) s = amcuq_experiment_set_workers(exp, *o.workers);
  if (s == AMCUQ_OK && o.seed) s = amcuq_experiment_set_seed(exp, *o.seed);
  if (s == AMCUQ_OK && !o.precision.empty()) s = amcuq_experiment_set_precision(exp, o.precision.c_str());
  for (const auto& stage : stages) {
    if (s != AMCUQ_OK) break;
    std::fprintf(stderr, "amcuq: %s\n", stage.c_str());
    s = amcuq_experiment_run(exp, stage.c_str());
  }
  amcuq_experiment_free(exp);
  return report(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep-ensemble uncertainty pipeline for modulation classification"};
  app.require_subcommand(1);
  app.set_version_flag("--version", amcuq_version());

  Options opts;
  const std::vector<std::string> stages = {"generate", "train", "evaluate", "attack", "report"};
  std::vector<std::string> chosen;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", opts.config, "Experiment config (YAML)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", opts.out, "Output directory (overrides output_dir)");
    cmd->add_option("--workers", opts.workers, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--seed-override", opts.seed, "Replace the root seed");
    cmd->add_option("--precision", opts.precision, "Arithmetic precision")->check(CLI::IsMember({"f32", "f64"}));
  };
  for (const auto& stage : stages) {
    auto* cmd = app.add_subcommand(stage, "Run the " + stage + " stage");
    add_common(cmd);
    cmd->callback([&chosen, stage] { chosen = {stage}; });
  }
  auto* all = app.add_subcommand("run", "Run every stage in order");
  add_common(all);
  all->callback([&chosen, &stages] { chosen = stages; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  return run(opts, chosen);
}
