#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "olv/bl.hpp"
#include "olv/core.hpp"
#include "olv/estimators.hpp"
#include "olv/gc_oracle.hpp"
#include "olv/grid.hpp"
#include "olv/md.hpp"
#include "olv/potential.hpp"

namespace olv {

inline constexpr const char* kVersion = "1.0.0";

struct EngineSection {
  EngineConfig engine;
  std::size_t burn_in = 0;
  std::size_t frame_stride = 0;  // trajectory output stride; 0 disables
  bool detect_crossings = true;
  std::string trajectory = "none";  // none | jsonl | binary | both
  double min_separation = 0.0;
};

struct EstimatorSection {
  PnOptions pn;
  std::size_t flux_blocks = 50;
};

struct OracleSection {
  double mu = 0.0;
  double P = 0.0;
  double h = 1.0;
  std::size_t widom_insertions = 200;  // per frame
  std::size_t widom_frame_stride = 100;
};

struct BLSection {
  double nu = 1.0;
  std::size_t steps = 100000;
  double dt_max = 0.1;
  double flow_dt = 0.005;
  double sample_dt = 0.1;
  double birth_multiplier = 1.0;
  std::size_t n_cap = 0;
  std::size_t replicas = 1;
};

struct GridSection {
  GridSpec spec;
  std::size_t N = 1;
  std::size_t steps = 0;
  ClosureSpec closure;
  std::string init = "gaussian";   // gaussian | gc | empty
  std::string oracle = "full";     // full | exact | none
  Gaussian1 packet_a{5.0, 0.8, 0.0, 1.0};
  Gaussian1 packet_b{5.0, 0.8, 0.0, 1.0};
  double mean_field_rho = 0.0;     // 0 disables the mean field
  std::size_t snapshot_every = 0;  // 0: first and last only
};

struct CompareSection {
  std::string a, b;
  std::string column = "p";
  std::string error_column = "p_err";
  double k_sigma = 3.0;
  double alpha = 0.01;
};

struct ReportSection {
  std::vector<std::string> inputs;
};

struct ScenarioConfig {
  std::string path;
  std::string text;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  std::string out = "out";
  UniverseSpec universe;
  RegionSpec region;
  PairPotentialSpec potential;
  EngineSection engine;
  EstimatorSection estimators;
  OracleSection oracle;
  GCMCConfig gcmc;
  BLSection bl;
  GridSection grid;
  CompareSection compare;
  ReportSection report;
  std::vector<std::string> warnings;

  GCParams gc_params(double volume) const;
};

// Sectioned key = value text; see README for the grammar and keys.
ScenarioConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
ScenarioConfig load_config(const std::string& path);

// Cross-field checks for a subcommand: dt guard, CFL, Delta vs cutoff.
void validate_for(ScenarioConfig& config, const std::string& subcommand);

struct RunArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::string> out;
};

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitRuntime = 3, kExitAcceptance = 4 };

// Runs one subcommand; messages go to `log`. Never throws.
int run_scenario(const std::string& subcommand, const RunArgs& args, std::ostream& log);

std::string config_hash(const std::string& text);

}  // namespace olv
