#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "streamgemm/engine.hpp"
#include "streamgemm/report.hpp"

namespace streamgemm {

enum class VerifyMode { Auto, Full, Spot };

struct BenchOptions {
  std::size_t repeats = 5;
  VerifyMode verify = VerifyMode::Auto;
  // Auto picks Full while 2*M*K*N stays under this many flops.
  std::uint64_t full_verify_flop_limit = std::uint64_t{1} << 33;
  // Spot mode checks this many full rows of C (always including the first
  // and last) against the reference.
  std::size_t spot_rows = 4;
  std::uint64_t seed = 42;
};

struct Timing {
  double median = 0, min = 0, max = 0;
};

struct BenchResult {
  GemmShape shape;
  Timing reference;
  // Reference timed on the spot rows only and scaled by M / rows.
  bool reference_extrapolated = false;
  Timing streamed;
  bool equal = false;
  VerifyMode verified_with = VerifyMode::Full;
  std::vector<std::size_t> checked_rows;  // spot mode only
  EngineCounters counters;
};

/// Deterministic uniform [-1, 1) fill.
Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed);

/// Rows {0, m-1} plus evenly spread interior rows, at most `count` in total.
std::vector<std::size_t> spot_rows(std::size_t m, std::size_t count);

/// Times gemm_reference and gemm_streamed on random operands (median of
/// `repeats`) and compares the streamed result with the reference bit for
/// bit, either over all of C or over the spot rows.
BenchResult run_bench(const GemmShape& shape, const EngineConfig& config, const BenchOptions& options = {});

/// "reference" and "streamed" rows for a report. Throws if the result was
/// not verified equal, so unverified timings never reach a report.
std::vector<ReportRow> bench_rows(const BenchResult& result);

std::string to_string(VerifyMode mode);

}  // namespace streamgemm
