#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vlce/error.hpp"
#include "vlce/pipeline.hpp"

namespace {

struct StageArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  long long seed = -1;
  unsigned jobs = 1;
  bool quiet = false;
};

vlce::PipelineConfig load(const StageArgs& a) {
  auto overrides = a.overrides;
  if (a.seed >= 0) overrides.push_back("seed=" + std::to_string(a.seed));
  auto cfg = vlce::load_pipeline_config(a.config, overrides);
  if (!a.out.empty()) cfg.output = std::filesystem::absolute(a.out);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-enriched disaster caption pipeline"};
  app.require_subcommand(0, 1);
  bool version = false;
  std::string manifest_dir;
  app.add_flag("--version", version, "Print the version and exit");
  app.add_option("--manifest", manifest_dir, "Print the artifact lineage of an output directory");

  StageArgs args;
  std::vector<std::pair<std::string, CLI::App*>> commands;
  auto add_stage = [&](const std::string& name, const std::string& help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", args.config, "Pipeline configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--set", args.overrides, "Override a config key, e.g. --set training.batch_size=8");
    sub->add_option("--seed", args.seed, "Global seed; every module seed is derived from it");
    sub->add_option("-j,--jobs", args.jobs, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("-o,--out", args.out, "Output directory (overrides paths.output)");
    sub->add_flag("-q,--quiet", args.quiet, "Suppress progress messages");
    commands.emplace_back(name, sub);
  };
  for (auto s : vlce::kAllStages) add_stage(vlce::stage_name(s), "Run the " + vlce::stage_name(s) + " stage");
  add_stage("pipeline", "Run every stage in order");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (version) {
      std::cout << "vlce " << vlce::kVersion << "\n";
      return 0;
    }
    if (!manifest_dir.empty()) {
      std::cout << vlce::manifest_lineage(manifest_dir);
      return 0;
    }
    for (const auto& [name, sub] : commands) {
      if (!sub->parsed()) continue;
      const auto cfg = load(args);
      vlce::RunOptions opts;
      opts.jobs = args.jobs;
      if (!args.quiet) opts.log = [](const std::string& m) { std::cerr << m << "\n"; };
      if (name == "pipeline") {
        vlce::run_pipeline(cfg, opts);
      } else {
        vlce::run_stage(cfg, *vlce::parse_stage(name), opts);
      }
      return 0;
    }
    std::cerr << app.help();
    return 2;
  } catch (const vlce::Error& e) {
    std::cerr << "vlce: " << e.what() << "\n";
    return vlce::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "vlce: " << e.what() << "\n";
    return 1;
  }
}
