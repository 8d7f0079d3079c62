#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "olv/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"olv: open-system Liouville toolkit"};
  app.set_version_flag("--version", std::string(olv::kVersion));
  app.require_subcommand(1);

  olv::RunArgs args;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  std::string out;

  const char* subs[][2] = {
      {"universe-md", "closed-universe MD run with occupancy and flux estimators"},
      {"grid", "1D hierarchy solve with oracle comparison"},
      {"bl", "birth/death chain with stationarity checks"},
      {"gcmc", "grand-canonical Monte Carlo oracle sampling"},
      {"widom", "Widom chemical potential from an NVT run"},
      {"compare", "statistical comparison of two estimate tables"},
      {"report", "summary table over estimate CSVs"},
  };
  for (const auto& s : subs) {
    auto* sc = app.add_subcommand(s[0], s[1]);
    sc->add_option("--config", args.config, "config file (sectioned key = value)")->required();
    sc->add_option("--seed", seed, "overrides run.seed");
    sc->add_option("--threads", threads, "worker threads (1 is bit-reproducible)");
    sc->add_option("--out", out, "output directory (overrides run.out)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : olv::kExitConfig;
  }

  const auto* chosen = app.get_subcommands().front();
  if (chosen->count("--seed")) args.seed = seed;
  if (chosen->count("--threads")) args.threads = threads;
  if (chosen->count("--out")) args.out = out;
  return olv::run_scenario(chosen->get_name(), args, std::cerr);
}
