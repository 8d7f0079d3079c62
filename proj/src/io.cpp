#include "olv/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "olv/error.hpp"

namespace olv {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
bool get(std::istream& is, T& v) {
  return static_cast<bool>(is.read(reinterpret_cast<char*>(&v), sizeof(T)));
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

void write_csv(const CsvTable& t, std::ostream& os) {
  os << "# quantity: " << t.quantity << "\n";
  os << "# units: " << t.units << "\n";
  for (const auto& n : t.notes) os << "# " << n << "\n";
  for (std::size_t c = 0; c < t.columns.size(); ++c) os << (c ? "," : "") << t.columns[c];
  os << "\n";
  for (const auto& row : t.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << fmt(row[c]);
    os << "\n";
  }
}

void write_csv(const CsvTable& table, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::IoError, "cannot write " + path);
  write_csv(table, os);
}

CsvTable read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::IoError, "cannot read " + path);
  CsvTable t;
  std::string line;
  bool header = false;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    if (line[0] == '#') {
      const std::string body = trim(line.substr(1));
      if (body.rfind("quantity:", 0) == 0) t.quantity = trim(body.substr(9));
      else if (body.rfind("units:", 0) == 0) t.units = trim(body.substr(6));
      else t.notes.push_back(body);
      continue;
    }
    if (!header) {
      t.columns = split(line, ',');
      header = true;
      continue;
    }
    const auto cells = split(line, ',');
    if (cells.size() != t.columns.size())
      throw Error(ErrorCode::IoError, path + ":" + std::to_string(lineno) + ": wrong number of columns");
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw Error(ErrorCode::IoError, path + ":" + std::to_string(lineno) + ": non-numeric cell '" + c + "'");
      }
    }
    t.rows.push_back(std::move(row));
  }
  if (!header) throw Error(ErrorCode::IoError, path + ": missing header row");
  return t;
}

std::size_t column_index(const CsvTable& table, const std::string& name) {
  for (std::size_t c = 0; c < table.columns.size(); ++c)
    if (table.columns[c] == name) return c;
  throw Error(ErrorCode::IoError, "column '" + name + "' not found");
}

void write_binary_frame(std::ostream& os, const SimState& state, std::span<const Region> labels) {
  if (labels.size() != state.particles.size())
    throw Error(ErrorCode::IoError, "frame labels do not match the particle count");
  os.write(kFrameMagic, 4);
  put(os, std::uint32_t{1});
  put(os, static_cast<std::uint64_t>(state.particles.size()));
  put(os, state.time);
  for (const auto& pp : state.particles) {
    const double v[6] = {pp.q.x, pp.q.y, pp.q.z, pp.p.x, pp.p.y, pp.p.z};
    os.write(reinterpret_cast<const char*>(v), sizeof v);
  }
  for (Region r : labels) put(os, static_cast<std::uint8_t>(r));
}

bool read_binary_frame(std::istream& is, SimState& state, std::vector<Region>& labels) {
  char magic[4];
  if (!is.read(magic, 4)) {
    if (is.gcount() == 0) return false;
    throw Error(ErrorCode::IoError, "truncated frame header");
  }
  if (std::memcmp(magic, kFrameMagic, 4) != 0) throw Error(ErrorCode::IoError, "bad frame magic");
  std::uint32_t version = 0;
  std::uint64_t n = 0;
  if (!get(is, version) || !get(is, n) || !get(is, state.time)) throw Error(ErrorCode::IoError, "truncated frame header");
  if (version != 1) throw Error(ErrorCode::IoError, "unsupported frame version " + std::to_string(version));
  state.particles.resize(n);
  for (auto& pp : state.particles) {
    double v[6];
    if (!is.read(reinterpret_cast<char*>(v), sizeof v)) throw Error(ErrorCode::IoError, "truncated frame body");
    pp.q = {v[0], v[1], v[2]};
    pp.p = {v[3], v[4], v[5]};
  }
  labels.resize(n);
  for (auto& r : labels) {
    std::uint8_t b = 0;
    if (!get(is, b) || b > 2) throw Error(ErrorCode::IoError, "bad frame labels");
    r = static_cast<Region>(b);
  }
  return true;
}

void write_jsonl_frame(std::ostream& os, const SimState& state, std::span<const Region> labels) {
  nlohmann::json j;
  j["time"] = state.time;
  auto q = nlohmann::json::array(), p = nlohmann::json::array(), r = nlohmann::json::array();
  for (std::size_t i = 0; i < state.particles.size(); ++i) {
    const auto& pp = state.particles[i];
    q.push_back({pp.q.x, pp.q.y, pp.q.z});
    p.push_back({pp.p.x, pp.p.y, pp.p.z});
    r.push_back(std::string(to_string(labels[i])));
  }
  j["positions"] = std::move(q);
  j["momenta"] = std::move(p);
  j["regions"] = std::move(r);
  os << j.dump() << "\n";
}

TrajectoryWriter::TrajectoryWriter(std::ostream* jsonl, std::ostream* binary, UniverseSpec universe, RegionSpec region)
    : jsonl_(jsonl), binary_(binary), universe_(universe), region_(region) {}

void TrajectoryWriter::on_frame(std::size_t, const SimState& state) {
  std::vector<Region> labels(state.particles.size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = region_of(state.particles[i].q, universe_, region_);
  if (jsonl_) write_jsonl_frame(*jsonl_, state, labels);
  if (binary_) write_binary_frame(*binary_, state, labels);
  ++frames_;
}

void write_event_csv(std::ostream& os, std::span<const LoggedEvent> events, double dt) {
  os << "step,time,particle,direction,face\n";
  for (const auto& e : events) {
    const double t = (static_cast<double>(e.step) - 1.0) * dt + e.event.time;
    os << e.step << "," << fmt(t) << "," << e.event.particle << ","
       << (e.event.direction == Direction::In ? "in" : "out") << "," << e.event.face << "\n";
  }
}

void write_jump_csv(std::ostream& os, std::span<const JumpEvent> events) {
  os << "time,type,n_before,n_after,dU\n";
  for (const auto& e : events)
    os << fmt(e.time) << "," << (e.type == JumpType::Birth ? "birth" : "death") << "," << e.n_before << ","
       << e.n_after << "," << fmt(e.dU) << "\n";
}

void write_gcmc_sample_jsonl(std::ostream& os, const GCMCSample& s) {
  nlohmann::json j{{"record", "sample"}, {"sweep", s.sweep}, {"n", s.n}, {"energy", s.energy}};
  os << j.dump() << "\n";
}

void write_gcmc_checkpoint_jsonl(std::ostream& os, const GCMCResult& r, std::uint64_t rng_key,
                                 std::uint64_t rng_counter) {
  nlohmann::json j;
  j["record"] = "checkpoint";
  j["n"] = r.final_positions.size();
  auto q = nlohmann::json::array();
  for (const auto& v : r.final_positions) q.push_back({v.x, v.y, v.z});
  j["positions"] = std::move(q);
  j["rng"] = {{"key", rng_key}, {"counter", rng_counter}};
  j["acceptance"] = {{"displace", r.displace.rate()}, {"insert", r.insert.rate()}, {"delete", r.remove.rate()}};
  os << j.dump() << "\n";
}

CsvTable pn_table(const PnEstimate& e) {
  CsvTable t{"occupancy probability p_n", "dimensionless", {"n", "p", "p_err"}, {}, {}};
  for (std::size_t n = 0; n < e.p.size(); ++n) t.rows.push_back({double(n), e.p[n], e.p_err[n]});
  t.notes = {"samples: " + std::to_string(e.samples), "stride: " + std::to_string(e.stride),
             "tau_int: " + fmt(e.tau_int), "mean: " + fmt(e.mean) + " +- " + fmt(e.mean_err),
             "variance: " + fmt(e.variance) + " +- " + fmt(e.variance_err)};
  return t;
}

CsvTable flux_table(const FluxEstimate& e) {
  CsvTable t{"per-edge transition rates n->n+1 (in) and n+1->n (out)", "1/time",
             {"n", "in_count", "out_count", "in_rate", "out_rate", "net_rate", "net_err"}, {}, {}};
  for (std::size_t k = 0; k < e.net_rate.size(); ++k)
    t.rows.push_back({double(k), e.record.in[k], e.record.out[k], e.in_rate[k], e.out_rate[k], e.net_rate[k],
                      e.net_err[k]});
  t.notes = {"time: " + fmt(e.record.time), "total_in_rate: " + fmt(e.total_in_rate) + " +- " + fmt(e.total_in_err),
             "total_out_rate: " + fmt(e.total_out_rate) + " +- " + fmt(e.total_out_err)};
  return t;
}

CsvTable law_table(const DiscreteLaw& law, const std::string& quantity) {
  CsvTable t{quantity, "dimensionless", {"n", "p", "p_err"}, {}, {}};
  for (std::size_t n = 0; n < law.p.size(); ++n) t.rows.push_back({double(n), law.p[n], 0.0});
  t.notes = {"tail: " + fmt(law.tail), "mean: " + fmt(law.mean()), "variance: " + fmt(law.variance())};
  return t;
}

}  // namespace olv
