#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "olv/bl.hpp"
#include "olv/core.hpp"
#include "olv/estimators.hpp"
#include "olv/gc_oracle.hpp"
#include "olv/md.hpp"

namespace olv {

// ---------------------------------------------------------------- tables

// CSV with a commented preamble naming the quantity and its units:
//   # quantity: occupancy probability
//   # units: dimensionless
//   n,p,p_err
struct CsvTable {
  std::string quantity;
  std::string units;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> notes;  // extra "# key: value" lines
};

void write_csv(const CsvTable& table, std::ostream& os);
void write_csv(const CsvTable& table, const std::string& path);
CsvTable read_csv(const std::string& path);
// Column index by name; throws IoError when absent.
std::size_t column_index(const CsvTable& table, const std::string& name);

// ------------------------------------------------------------ trajectories

// Binary frame layout (little-endian):
//   char[4]  "OLV1"
//   uint32   version (1)
//   uint64   particle count n
//   float64  time
//   float64  q.x q.y q.z p.x p.y p.z   (n times)
//   uint8    region label              (n times)
inline constexpr char kFrameMagic[4] = {'O', 'L', 'V', '1'};

void write_binary_frame(std::ostream& os, const SimState& state, std::span<const Region> labels);
// Returns false at a clean end of stream.
bool read_binary_frame(std::istream& is, SimState& state, std::vector<Region>& labels);

void write_jsonl_frame(std::ostream& os, const SimState& state, std::span<const Region> labels);

class TrajectoryWriter : public Observer {
 public:
  TrajectoryWriter(std::ostream* jsonl, std::ostream* binary, UniverseSpec universe, RegionSpec region);
  void on_frame(std::size_t step, const SimState& state) override;
  std::size_t frames() const noexcept { return frames_; }

 private:
  std::ostream* jsonl_;
  std::ostream* binary_;
  UniverseSpec universe_;
  RegionSpec region_;
  std::size_t frames_ = 0;
};

// ------------------------------------------------------------- event logs

// step,time,particle,direction,face
void write_event_csv(std::ostream& os, std::span<const LoggedEvent> events, double dt);
// time,type,n_before,n_after,dU
void write_jump_csv(std::ostream& os, std::span<const JumpEvent> events);

// One JSON object per line: samples while running, then a final checkpoint
// record carrying the configuration of the last sweep.
void write_gcmc_sample_jsonl(std::ostream& os, const GCMCSample& sample);
void write_gcmc_checkpoint_jsonl(std::ostream& os, const GCMCResult& result, std::uint64_t rng_key,
                                 std::uint64_t rng_counter);

// ---------------------------------------------------------------- estimates

CsvTable pn_table(const PnEstimate& estimate);
CsvTable flux_table(const FluxEstimate& estimate);
CsvTable law_table(const DiscreteLaw& law, const std::string& quantity);

}  // namespace olv
