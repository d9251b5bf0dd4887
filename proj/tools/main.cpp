#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "deeplimit/config.hpp"
#include "deeplimit/drivers.hpp"
#include "deeplimit/parallel.hpp"

namespace {

constexpr const char* kCommands[] = {"train-discrete", "train-continuum", "ladder",
                                     "euler-bound",    "grad-check",      "recovery-check",
                                     "morrey-sweep",   "rate-fit"};

constexpr const char* kDescriptions[] = {
    "minimize the layered objective on a dataset",
    "minimize the flow-matching objective on a dataset",
    "minimize across a depth ladder and compare against the flow minimizer",
    "verify the one-step-per-layer error bound on a smooth path family",
    "compare analytic derivatives against finite differences",
    "measure restriction energies and path distances against a smooth target",
    "sample the discrete sup-norm inequality over random paths",
    "fit a power law to (n, value) pairs",
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deeplimit: deep-layer network limits, checked numerically"};
  app.require_subcommand(1);

  std::string configPath;
  std::string outDir;
  std::uint64_t seed = 0;
  bool seedSet = false;
  int threads = 0;

  for (size_t k = 0; k < std::size(kCommands); ++k) {
    CLI::App* sub = app.add_subcommand(kCommands[k], kDescriptions[k]);
    sub->add_option("--config", configPath, "run configuration file (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", outDir, "output directory (overrides config)");
    sub->add_option("--seed", seed, "seed (overrides config)")
        ->each([&seedSet](const std::string&) { seedSet = true; });
    sub->add_option("--threads", threads, "worker threads (fallback: DEEPLIMIT_THREADS)")
        ->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // prints help or the usage diagnostic; usage problems exit 2, help exits 0
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    deeplimit::RunConfig cfg = deeplimit::parse_config(configPath);
    if (!outDir.empty()) cfg.outDir = outDir;
    if (seedSet) {
      cfg.seed = seed;
      deeplimit::refresh_echo(cfg);
    }
    if (threads >= 1) deeplimit::thread_count() = threads;
    return deeplimit::dispatch(command, cfg);
  } catch (const std::runtime_error& e) {
    // config/IO problems: bad file, bad key, missing data
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
