#include "streamgemm/perf_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "byte_io.hpp"

namespace streamgemm {

void DevicePreset::validate() const {
  const auto bad = [&](const std::string& why) {
    throw Error(ErrorCode::InvalidPreset, "preset '" + name + "': " + why);
  };
  if (name.empty()) bad("missing name");
  if (!std::isfinite(clock_hz) || clock_hz <= 0) bad("clock_hz must be positive");
  if (macs_per_cycle == 0) bad("macs_per_cycle must be positive");
  if (!std::isfinite(bytes_per_cycle_per_bank) || bytes_per_cycle_per_bank <= 0)
    bad("bytes_per_cycle_per_bank must be positive");
  if (n_banks_max == 0) bad("n_banks_max must be positive");
  for (const auto& [v, field] : {std::pair{static_watts, "static_watts"}, std::pair{joules_per_flop, "joules_per_flop"},
                                 std::pair{joules_per_byte, "joules_per_byte"}})
    if (!std::isfinite(v) || v < 0) bad(std::string(field) + " must be finite and non-negative");
  if (static_watts == 0 && joules_per_flop == 0 && joules_per_byte == 0) bad("all energy terms are zero");
}

namespace {

double parse_double(const std::string& key, const std::string& value) {
  double v = 0;
  const char* first = value.data();
  const char* last = first + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw Error(ErrorCode::InvalidPreset, "'" + key + "' expects a number, got '" + value + "'");
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

}  // namespace

DevicePreset parse_preset(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::InvalidPreset, "line " + std::to_string(line_no) + ": expected key=value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }

  DevicePreset p;
  const auto take = [&](const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw Error(ErrorCode::InvalidPreset, "missing key '" + key + "'");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  p.name = take("name");
  p.clock_hz = parse_double("clock_hz", take("clock_hz"));
  const double macs = parse_double("macs_per_cycle", take("macs_per_cycle"));
  if (macs < 1 || macs != std::floor(macs)) throw Error(ErrorCode::InvalidPreset, "macs_per_cycle must be a positive integer");
  p.macs_per_cycle = static_cast<std::uint64_t>(macs);
  p.bytes_per_cycle_per_bank = parse_double("bytes_per_cycle_per_bank", take("bytes_per_cycle_per_bank"));
  const double banks = parse_double("n_banks_max", take("n_banks_max"));
  if (banks < 1 || banks != std::floor(banks)) throw Error(ErrorCode::InvalidPreset, "n_banks_max must be a positive integer");
  p.n_banks_max = static_cast<std::size_t>(banks);
  p.static_watts = parse_double("static_watts", take("static_watts"));
  p.joules_per_flop = parse_double("joules_per_flop", take("joules_per_flop"));
  p.joules_per_byte = parse_double("joules_per_byte", take("joules_per_byte"));
  if (!kv.empty()) throw Error(ErrorCode::InvalidPreset, "unknown key '" + kv.begin()->first + "'");
  p.validate();
  return p;
}

DevicePreset load_preset(const std::string& path) { return parse_preset(detail::read_text_file(path)); }

std::string format_preset(const DevicePreset& p) {
  std::ostringstream ss;
  ss << "name=" << p.name << "\n"
     << "clock_hz=" << fmt(p.clock_hz) << "\n"
     << "macs_per_cycle=" << p.macs_per_cycle << "\n"
     << "bytes_per_cycle_per_bank=" << fmt(p.bytes_per_cycle_per_bank) << "\n"
     << "n_banks_max=" << p.n_banks_max << "\n"
     << "static_watts=" << fmt(p.static_watts) << "\n"
     << "joules_per_flop=" << fmt(p.joules_per_flop) << "\n"
     << "joules_per_byte=" << fmt(p.joules_per_byte) << "\n";
  return ss.str();
}

const std::vector<DevicePreset>& builtin_presets() {
  // Illustrative numbers in the right ballpark for each device class. They
  // are not fitted to any published measurement.
  static const std::vector<DevicePreset> presets{
      {"alveo-like", 300e6, 1024, 64.0, 32, 22.0, 2.0e-11, 6.0e-11},
      {"kria-like", 250e6, 128, 16.0, 2, 3.5, 3.0e-11, 1.2e-10},
      {"xeon-like", 2.1e9, 64, 32.0, 4, 85.0, 1.5e-10, 2.0e-10},
      {"arm-like", 1.2e9, 16, 8.0, 1, 2.5, 2.0e-10, 3.0e-10},
  };
  return presets;
}

const DevicePreset& builtin_preset(const std::string& name) {
  for (const auto& p : builtin_presets())
    if (p.name == name) return p;
  throw Error(ErrorCode::InvalidPreset, "no built-in preset named '" + name + "'");
}

std::uint64_t PerfEstimate::max_transfer_cycles() const noexcept {
  std::uint64_t m = 0;
  for (auto c : transfer_cycles_per_bank) m = std::max(m, c);
  return m;
}

double effective_bank_rate(const EngineConfig& config, const DevicePreset& preset) {
  return std::min(preset.bytes_per_cycle_per_bank, static_cast<double>(config.bus_width_bits) / 8.0);
}

namespace {

std::uint64_t ceil_cycles(double work, double rate) { return static_cast<std::uint64_t>(std::ceil(work / rate)); }

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

}  // namespace

std::uint64_t tile_cycle_cost(const EngineConfig& c, const DevicePreset& p) {
  const std::uint64_t compute = ceil_div(static_cast<std::uint64_t>(c.tile_m) * c.tile_k * c.tile_n, p.macs_per_cycle);
  const double operand_bytes = static_cast<double>(c.tile_m * c.tile_k + c.tile_k * c.tile_n) * sizeof(float);
  return std::max(compute, ceil_cycles(operand_bytes, effective_bank_rate(c, p)));
}

PerfEstimate estimate(const TileSchedule& schedule, const EngineCounters& counters, const DevicePreset& preset) {
  preset.validate();
  const auto& cfg = schedule.config;
  if (counters.payload_bytes_per_bank.size() != cfg.n_banks || counters.words_per_bank.size() != cfg.n_banks)
    throw Error(ErrorCode::DimMismatch, "counters do not match the schedule's bank count");
  if (cfg.n_banks > preset.n_banks_max)
    throw Error(ErrorCode::InvalidPreset, "preset '" + preset.name + "' offers " + std::to_string(preset.n_banks_max) +
                                              " banks, config uses " + std::to_string(cfg.n_banks));

  PerfEstimate e;
  e.flops = schedule.shape.flops();
  e.compute_cycles = ceil_div(e.flops / 2, preset.macs_per_cycle);

  const double rate = effective_bank_rate(cfg, preset);
  for (auto bytes : counters.payload_bytes_per_bank)
    e.transfer_cycles_per_bank.push_back(ceil_cycles(static_cast<double>(bytes), rate));

  e.fill_latency = kPipelineStages * cfg.stream_depth * tile_cycle_cost(cfg, preset);
  e.total_cycles = std::max(e.compute_cycles, e.max_transfer_cycles()) + e.fill_latency;
  e.seconds = static_cast<double>(e.total_cycles) / preset.clock_hz;
  e.gflops = static_cast<double>(e.flops) / e.seconds / 1e9;

  const double bus_bytes = static_cast<double>(counters.total_words()) * static_cast<double>(cfg.bus_width_bits / 8);
  e.compute_joules = static_cast<double>(e.flops) * preset.joules_per_flop;
  e.transfer_joules = bus_bytes * preset.joules_per_byte;
  e.static_joules = e.seconds * preset.static_watts;
  e.energy_joules = e.compute_joules + e.transfer_joules + e.static_joules;
  e.watts = e.energy_joules / e.seconds;
  e.gflops_per_watt = e.gflops / e.watts;
  return e;
}

std::string estimates_csv(std::span<const NamedEstimate> rows) {
  std::ostringstream ss;
  ss << "name,cycles,seconds,gflops,watts,gflops_per_watt\n";
  for (const auto& [name, e] : rows)
    ss << name << "," << e.total_cycles << "," << fmt(e.seconds) << "," << fmt(e.gflops) << "," << fmt(e.watts) << ","
       << fmt(e.gflops_per_watt) << "\n";
  return ss.str();
}

Comparison compare(std::span<const DevicePreset> presets, const GemmShape& shape, const EngineConfig& config,
                   std::span<const ReportRow> measured) {
  Comparison out;
  std::map<std::string, int> seen;
  for (const auto& row : measured) {
    seen[row.label] = 1;
    out.report.rows.push_back(row);
  }
  for (const auto& preset : presets) {
    EngineConfig cfg = config;
    cfg.n_banks = std::min(cfg.n_banks, preset.n_banks_max);
    const TileSchedule schedule = plan_tiles(shape, cfg);
    const PerfEstimate e = estimate(schedule, count_transfers(schedule), preset);

    std::string label = preset.name;
    if (const int n = ++seen[label]; n > 1) label += "#" + std::to_string(n);
    out.estimates.push_back({label, e});
    out.report.rows.push_back({label, shape.m, shape.k, shape.n, "model", e.seconds, e.gflops, e.gflops_per_watt});
  }
  out.report.metadata.emplace_back("config", "tile=" + std::to_string(config.tile_m) + "x" +
                                                 std::to_string(config.tile_k) + "x" + std::to_string(config.tile_n) +
                                                 " banks=" + std::to_string(config.n_banks) +
                                                 " bus_bits=" + std::to_string(config.bus_width_bits) +
                                                 " stream_depth=" + std::to_string(config.stream_depth));
  out.report.metadata.emplace_back("flops", std::to_string(shape.flops()));
  if (!out.report.rows.empty()) {
    out.baseline = out.report.rows.front().label;
    out.ratios = ratio_table(out.report, out.baseline);
  }
  return out;
}

}  // namespace streamgemm
