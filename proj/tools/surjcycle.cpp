#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "surjcycle/cli/commands.hpp"

using namespace surjcycle;

int main(int argc, char** argv) {
  CLI::App app{"surjcycle: cycle-consistent CVAE experiments"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;

  CLI::App* affine = app.add_subcommand("affine-verify", "train the affine CVAE and check recovery");
  affine->add_option("--config", config_path, "JSON config")->required();
  affine->add_option("--seed", seed, "override config seed");
  affine->add_option("--out", out, "override output directory");
  CLI::App* tiles = app.add_subcommand("tiles", "train base and CycleCVAE models on the tile images");
  tiles->add_option("--config", config_path, "JSON config")->required();
  tiles->add_option("--seed", seed, "override first seed");
  tiles->add_option("--out", out, "override output directory");
  CLI::App* bound = app.add_subcommand("bound-check", "compare the ELBO with importance estimates");
  bound->add_option("--config", config_path, "JSON config")->required();
  bound->add_option("--seed", seed, "override config seed");
  bound->add_option("--out", out, "override output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kInvalidConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    cli::ExperimentConfig config = cli::load_config(config_path);
    if (!config.kind.empty() && config.kind != command) {
      throw cli::ConfigError("config kind '" + config.kind + "' does not match command " + command);
    }
    if (seed) config.seed = *seed;
    if (out) config.out = *out;
    if (command == "affine-verify") return cli::run_affine_verify(config, std::cout);
    if (command == "tiles") return cli::run_tiles(config, std::cout);
    return cli::run_bound_check(config, std::cout);
  } catch (const cli::ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return cli::kInvalidConfig;
  } catch (const ContractError& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return cli::kInvalidConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kCheckFailed;
  }
}
