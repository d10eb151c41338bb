#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "streamgemm/engine.hpp"
#include "streamgemm/report.hpp"

namespace streamgemm {

/// Analytic description of a target device. The shipped presets are
/// illustrative calibrations, not measurements of any board.
struct DevicePreset {
  std::string name;
  double clock_hz = 0;
  std::uint64_t macs_per_cycle = 0;
  double bytes_per_cycle_per_bank = 0;
  std::size_t n_banks_max = 0;
  double static_watts = 0;
  double joules_per_flop = 0;
  double joules_per_byte = 0;

  /// Throws InvalidPreset unless every field is finite and in range and at
  /// least one energy term is non-zero (so watts stay positive).
  void validate() const;
};

/// Preset files are flat `key=value` text using the field names above;
/// `#` starts a comment line.
DevicePreset parse_preset(const std::string& text);
DevicePreset load_preset(const std::string& path);
std::string format_preset(const DevicePreset& preset);

/// "alveo-like", "kria-like", "xeon-like", "arm-like".
const std::vector<DevicePreset>& builtin_presets();
const DevicePreset& builtin_preset(const std::string& name);

struct PerfEstimate {
  std::uint64_t flops = 0;
  std::vector<std::uint64_t> transfer_cycles_per_bank;
  std::uint64_t compute_cycles = 0;
  std::uint64_t fill_latency = 0;
  std::uint64_t total_cycles = 0;
  double seconds = 0;
  double gflops = 0;
  double compute_joules = 0;
  double transfer_joules = 0;
  double static_joules = 0;
  double energy_joules = 0;
  double watts = 0;
  double gflops_per_watt = 0;

  std::uint64_t max_transfer_cycles() const noexcept;
};

/// Cycles one full tile occupies its busiest stage: the larger of the MAC
/// time for tile_m*tile_k*tile_n and the time to move one A and one B tile
/// through a single bank.
std::uint64_t tile_cycle_cost(const EngineConfig& config, const DevicePreset& preset);

/// Bytes a bank moves per cycle: the preset's bank bandwidth, capped by the
/// bus width.
double effective_bank_rate(const EngineConfig& config, const DevicePreset& preset);

/// Cycle and energy estimate with full transfer/compute overlap:
///   compute  = ceil(flops / 2 / macs_per_cycle)
///   transfer = ceil(payload_bytes[b] / effective_bank_rate)   per bank
///   total    = max(compute, max transfer) + stages * stream_depth * tile_cycle_cost
///   energy   = flops * J/flop + bus_bytes * J/byte + seconds * static_watts
/// where bus_bytes counts whole bus words. Throws InvalidPreset for a bad
/// preset or when the counters use more banks than the preset offers.
PerfEstimate estimate(const TileSchedule& schedule, const EngineCounters& counters, const DevicePreset& preset);

struct NamedEstimate {
  std::string name;
  PerfEstimate estimate;
};

/// CSV with header `name,cycles,seconds,gflops,watts,gflops_per_watt`.
std::string estimates_csv(std::span<const NamedEstimate> rows);

struct Comparison {
  BenchmarkReport report;
  std::vector<NamedEstimate> estimates;
  std::vector<RatioRow> ratios;  // normalized to `baseline`
  std::string baseline;
};

/// One model row per preset (the engine config is clamped to each preset's
/// bank count) plus any measured rows passed in. Ratios are taken against
/// the first measured row, or the first preset when nothing was measured.
/// Duplicate preset names get a `#2`, `#3`... suffix to keep labels unique.
Comparison compare(std::span<const DevicePreset> presets, const GemmShape& shape, const EngineConfig& config,
                   std::span<const ReportRow> measured = {});

}  // namespace streamgemm
