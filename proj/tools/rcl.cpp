#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rcl/cli.hpp"

int main(int argc, char **argv) {
  CLI::App app{"Pseudo-replay class-incremental learning for streaming sensor "
               "anomaly detection"};
  app.require_subcommand(1);

  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> repetitions;

  auto *synth = app.add_subcommand("synth", "Write a synthetic trial CSV");
  synth->add_option("--config", config, "Synthetic stream config (JSON)")
      ->required();
  synth->add_option("--out", out, "Output CSV path")->required();
  synth->add_option("--seed", seed, "Override the config seed");

  auto *run = app.add_subcommand("run", "Run the strategy comparison");
  run->add_option("--config", config, "Experiment config (JSON)")->required();
  run->add_option("--out", out, "Output directory (overrides output_dir)");
  run->add_option("--seed", seed, "Override master_seed");
  run->add_option("--repetitions", repetitions, "Override repetitions")
      ->check(CLI::PositiveNumber);

  auto *validate =
      app.add_subcommand("validate", "Check a config and its data");
  validate->add_option("--config", config, "Experiment config (JSON)")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return rcl::cli::exit_config;
  }

  if (synth->parsed())
    return rcl::cli::cmd_synth(config, out, seed, std::cout, std::cerr);
  if (run->parsed()) {
    rcl::cli::RunOverrides ov;
    if (!out.empty())
      ov.out_dir = out;
    ov.seed = seed;
    ov.repetitions = repetitions;
    return rcl::cli::cmd_run(config, ov, std::cout, std::cerr);
  }
  return rcl::cli::cmd_validate(config, std::cout, std::cerr);
}
