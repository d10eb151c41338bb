#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "streamgemm/tensor.hpp"

namespace streamgemm {

/// Parameterization of the streamed engine. Tile dims describe the on-chip
/// working set, banks the number of independent external-memory channels.
struct EngineConfig {
  std::size_t tile_m = 64;
  std::size_t tile_k = 64;
  std::size_t tile_n = 64;
  std::size_t n_banks = 4;
  std::size_t bus_width_bits = 512;
  std::size_t stream_depth = 2;
  std::size_t onchip_budget_bytes = 256 * 1024;
  std::size_t threads = 0;  // 0: hardware parallelism, capped by STREAMGEMM_THREADS

  std::size_t bus_lanes() const noexcept { return bus_width_bits / 32; }
  std::size_t working_set_floats() const noexcept {
    return tile_m * tile_k + tile_k * tile_n + tile_m * tile_n;
  }

  /// Throws InvalidValue for non-positive fields or a bus width that is not a
  /// multiple of 32, BudgetExceeded when the working set does not fit.
  void validate() const;
};

/// Number of pipeline stages (bank loaders, MAC, writer).
constexpr std::size_t kPipelineStages = 3;

/// Worker lanes the engine will use for `config`, after applying
/// STREAMGEMM_THREADS.
std::size_t resolve_threads(const EngineConfig& config);

struct GemmShape {
  std::size_t m = 0, k = 0, n = 0;

  /// 2*M*K*N; throws InvalidValue if it does not fit in 64 bits.
  std::uint64_t flops() const;
  friend bool operator==(const GemmShape&, const GemmShape&) = default;
};

struct TileOp {
  std::uint32_t mi = 0, ni = 0, ki = 0;
  friend bool operator==(const TileOp&, const TileOp&) = default;
};

/// Ordered tile traversal: mi-major, then ni, then ki ascending.
struct TileSchedule {
  GemmShape shape;
  EngineConfig config;
  std::size_t tiles_m = 0, tiles_n = 0, tiles_k = 0;
  std::vector<TileOp> ops;

  std::size_t output_tiles() const noexcept { return tiles_m * tiles_n; }
  /// Valid (unpadded) extents of the tile at a given block index.
  std::size_t rows_in(std::size_t mi) const noexcept;
  std::size_t depth_in(std::size_t ki) const noexcept;
  std::size_t cols_in(std::size_t ni) const noexcept;
};

TileSchedule plan_tiles(const GemmShape& shape, const EngineConfig& config);

/// ceil(count_fp32 / (bus_width_bits / 32))
std::uint64_t pack_bus_words(std::uint64_t count_fp32, std::size_t bus_width_bits);

/// Round-robin assignment of row blocks to banks: block i goes to bank
/// i mod n_banks. Returns the row indices held by each bank. The engine
/// deals the rows of every tile this way (block_rows = 1, counted from the
/// tile's first row), so with tile dims that are multiples of n_banks it
/// matches bank_partition over the whole matrix.
std::vector<std::vector<std::size_t>> bank_partition(std::size_t rows, std::size_t n_banks,
                                                     std::size_t block_rows = 1);
std::vector<std::vector<std::size_t>> bank_partition(const Matrix& m, std::size_t n_banks,
                                                     std::size_t block_rows = 1);

constexpr std::size_t bank_of_block(std::size_t block, std::size_t n_banks) noexcept { return block % n_banks; }

/// Traffic and activity recorded by one engine run. Local row i of every A,
/// B and C tile lives on bank i mod n_banks, so each tile transfer is spread
/// over all banks. Tiles move row by row, each row packed into bus words.
struct EngineCounters {
  std::uint64_t tile_ops = 0;
  std::uint64_t output_tiles = 0;
  std::vector<std::uint64_t> words_per_bank;
  std::vector<std::uint64_t> payload_bytes_per_bank;
  std::size_t peak_live_tile_bytes = 0;  // filled by gemm_streamed only
  std::size_t lanes = 0;                 // filled by gemm_streamed only

  std::uint64_t total_words() const noexcept;
  std::uint64_t total_payload_bytes() const noexcept;
};

/// Transfer counters implied by a schedule, without executing it.
EngineCounters count_transfers(const TileSchedule& schedule);

/// Naive triple loop; each output accumulates in one FP32 register over
/// ascending k.
Matrix gemm_reference(const Matrix& a, const Matrix& b);

/// Streamed, bank-partitioned tiled GEMM. Stages run concurrently and talk
/// only through bounded FIFOs of capacity config.stream_depth. Output tiles
/// are spread across lanes; k is never split, so the result is bitwise equal
/// to gemm_reference for every config and thread count.
Matrix gemm_streamed(const Matrix& a, const Matrix& b, const EngineConfig& config,
                     EngineCounters* counters = nullptr);

}  // namespace streamgemm
