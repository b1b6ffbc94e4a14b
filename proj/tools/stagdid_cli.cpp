#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "stagdid/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Staggered-adoption difference-in-differences"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> draws;
  std::optional<int> threads;
  std::optional<int> replications;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
    cmd->add_option("-o,--out", out_dir, "output directory");
    cmd->add_option("--seed", seed, "bootstrap and simulation seed");
    cmd->add_option("--B", draws, "bootstrap draws");
    cmd->add_option("--threads", threads, "worker threads");
  };
  auto* estimate = app.add_subcommand("estimate", "ATT(g,t) with simultaneous bands");
  auto* aggregate = app.add_subcommand("aggregate", "aggregated treatment-effect parameters");
  auto* pretest = app.add_subcommand("pretest", "pre-test of conditional parallel trends");
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo replications of a synthetic design");
  auto* generate = app.add_subcommand("generate", "draw one synthetic panel with its true effects");
  for (auto* cmd : {estimate, aggregate, pretest, simulate, generate}) add_common(cmd);
  simulate->add_option("-R,--replications", replications, "number of replications");

  CLI11_PARSE(app, argc, argv);

  try {
    stagdid::RunConfig config = stagdid::load_config(config_path);
    if (out_dir) config.output_dir = *out_dir;
    if (seed) {
      config.bootstrap.seed = *seed;
      config.dgp.seed = *seed;
    }
    if (draws) config.bootstrap.B = *draws;
    if (threads) config.threads = *threads;
    if (replications) config.replications = *replications;
    if (config.bootstrap.B < 1) throw stagdid::Error("cli", "B must be at least 1");
    if (config.threads < 1) throw stagdid::Error("cli", "threads must be at least 1");

    std::vector<std::string> written;
    if (*estimate) written = stagdid::cmd_estimate(config);
    else if (*aggregate) written = stagdid::cmd_aggregate(config);
    else if (*pretest) written = stagdid::cmd_pretest(config);
    else if (*simulate) written = stagdid::cmd_simulate(config);
    else written = stagdid::cmd_generate(config);
    for (const auto& path : written) std::cout << path << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
