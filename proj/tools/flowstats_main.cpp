#include <iostream>

#include <CLI11.hpp>

#include "scramblesuit/flowstats.hpp"

int main(int argc, char** argv) {
  using namespace scramblesuit;

  CLI::App app{"Flow-statistics harness for ScrambleSuit sessions"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand(
      "run", "run loopback transfers and record traces, ECDFs and overhead");
  flowstats::RunConfig config;
  std::string out_dir = "flowstats-out";
  run->add_option("--size", config.size, "application bytes per trial");
  run->add_option("--trials", config.trials, "number of trials");
  run->add_option("--seed", config.seed, "base seed for morphing");
  run->add_option("--out", out_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  config.out_dir = out_dir;
  int rc = flowstats::run_harness(config);
  if (rc != 0) {
    std::cerr << "payload integrity check failed\n";
    return rc;
  }
  std::cerr << "wrote " << out_dir << "/report.json\n";
  return 0;
}
