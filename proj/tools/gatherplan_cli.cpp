#include <iostream>

#include <CLI11.hpp>

#include "gatherplan/cli.hpp"

int main(int argc, char** argv) {
  gatherplan::cli::Options options;
  CLI::App app{"Plans and simulates multi-agent data-gathering missions."};
  app.require_subcommand(1);

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--scenario", options.scenario, "ASCII map ('#' obstacle, '.' free, 'O' operation center)")
        ->required();
    sub->add_option("--config", options.config, "key = value file of planner settings");
    sub->add_option("--method", options.method, "bap, pap, rap or all (overrides the config)");
    sub->add_option("--collectors", options.collectors, "collector count, or 'sweep' for 0..N/2");
    sub->add_option("--out", options.out_dir, "directory for output files");
    sub->add_flag("--export-segments", options.export_segments, "write the winning partition as segments.csv");
  };
  auto add_trials = [&](CLI::App* sub) {
    sub->add_option("--seed", options.seed, "first seed; trial t uses seed + t");
    sub->add_option("--trials", options.trials, "seeded missions per candidate")->check(CLI::PositiveNumber);
  };

  auto* plan = app.add_subcommand("plan", "rank every candidate and report the winner");
  add_common(plan);
  auto* simulate = app.add_subcommand("simulate", "plan, then execute the winner over seeded trials");
  add_common(simulate);
  add_trials(simulate);
  simulate->add_flag("--export-trace", options.export_trace, "write one JSON-lines trace per trial");
  auto* sweep = app.add_subcommand("sweep", "execute every candidate and compare with its estimates");
  add_common(sweep);
  add_trials(sweep);

  CLI11_PARSE(app, argc, argv);
  options.command = app.get_subcommands().front()->get_name();
  return gatherplan::cli::run(options, std::cout, std::cerr);
}
