#include "streamgemm/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "streamgemm/bounded_fifo.hpp"

namespace streamgemm {

void EngineConfig::validate() const {
  const auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw Error(ErrorCode::InvalidValue, std::string("engine ") + name + " must be positive");
  };
  positive(tile_m, "tile_m");
  positive(tile_k, "tile_k");
  positive(tile_n, "tile_n");
  positive(n_banks, "n_banks");
  positive(stream_depth, "stream_depth");
  if (bus_width_bits == 0 || bus_width_bits % 32 != 0)
    throw Error(ErrorCode::InvalidValue, "bus width must be a positive multiple of 32 bits, got " +
                                             std::to_string(bus_width_bits));
  const std::size_t bytes = working_set_floats() * sizeof(float);
  if (bytes > onchip_budget_bytes)
    throw Error(ErrorCode::BudgetExceeded, "tile working set of " + std::to_string(bytes) +
                                               " bytes exceeds the on-chip budget of " +
                                               std::to_string(onchip_budget_bytes));
}

std::size_t resolve_threads(const EngineConfig& config) {
  std::size_t threads = config.threads;
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("STREAMGEMM_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && cap > 0) threads = std::min(threads, static_cast<std::size_t>(cap));
  }
  return threads;
}

std::uint64_t GemmShape::flops() const {
  constexpr auto max = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t f = 2;
  for (std::uint64_t d : {m, k, n}) {
    if (d != 0 && f > max / d) throw Error(ErrorCode::InvalidValue, "flop count overflows 64 bits");
    f *= d;
  }
  return f;
}

std::size_t TileSchedule::rows_in(std::size_t mi) const noexcept {
  return std::min(config.tile_m, shape.m - mi * config.tile_m);
}
std::size_t TileSchedule::depth_in(std::size_t ki) const noexcept {
  return std::min(config.tile_k, shape.k - ki * config.tile_k);
}
std::size_t TileSchedule::cols_in(std::size_t ni) const noexcept {
  return std::min(config.tile_n, shape.n - ni * config.tile_n);
}

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

}  // namespace

TileSchedule plan_tiles(const GemmShape& shape, const EngineConfig& config) {
  config.validate();
  if (shape.m == 0 || shape.k == 0 || shape.n == 0)
    throw Error(ErrorCode::InvalidValue, "GEMM dims must be positive");

  TileSchedule s;
  s.shape = shape;
  s.config = config;
  s.tiles_m = ceil_div(shape.m, config.tile_m);
  s.tiles_n = ceil_div(shape.n, config.tile_n);
  s.tiles_k = ceil_div(shape.k, config.tile_k);
  if (std::max({s.tiles_m, s.tiles_n, s.tiles_k}) > std::numeric_limits<std::uint32_t>::max())
    throw Error(ErrorCode::InvalidValue, "too many tiles along one axis");

  s.ops.reserve(s.tiles_m * s.tiles_n * s.tiles_k);
  for (std::uint32_t mi = 0; mi < s.tiles_m; ++mi)
    for (std::uint32_t ni = 0; ni < s.tiles_n; ++ni)
      for (std::uint32_t ki = 0; ki < s.tiles_k; ++ki) s.ops.push_back({mi, ni, ki});
  return s;
}

std::uint64_t pack_bus_words(std::uint64_t count_fp32, std::size_t bus_width_bits) {
  if (bus_width_bits < 32 || bus_width_bits % 32 != 0)
    throw Error(ErrorCode::InvalidValue, "bus width must be a positive multiple of 32 bits");
  const std::uint64_t lanes = bus_width_bits / 32;
  return (count_fp32 + lanes - 1) / lanes;
}

std::vector<std::vector<std::size_t>> bank_partition(std::size_t rows, std::size_t n_banks, std::size_t block_rows) {
  if (n_banks == 0 || block_rows == 0) throw Error(ErrorCode::InvalidValue, "banks and block rows must be positive");
  std::vector<std::vector<std::size_t>> banks(n_banks);
  for (std::size_t r = 0; r < rows; ++r) banks[bank_of_block(r / block_rows, n_banks)].push_back(r);
  return banks;
}

std::vector<std::vector<std::size_t>> bank_partition(const Matrix& m, std::size_t n_banks, std::size_t block_rows) {
  return bank_partition(m.rows(), n_banks, block_rows);
}

std::uint64_t EngineCounters::total_words() const noexcept {
  std::uint64_t t = 0;
  for (auto w : words_per_bank) t += w;
  return t;
}

std::uint64_t EngineCounters::total_payload_bytes() const noexcept {
  std::uint64_t t = 0;
  for (auto b : payload_bytes_per_bank) t += b;
  return t;
}

namespace {

struct Traffic {
  std::vector<std::uint64_t> words, bytes;

  explicit Traffic(std::size_t banks) : words(banks, 0), bytes(banks, 0) {}

  void add(std::size_t bank, std::size_t rows, std::size_t row_len, std::size_t bus_bits) {
    words[bank] += rows * pack_bus_words(row_len, bus_bits);
    bytes[bank] += static_cast<std::uint64_t>(rows) * row_len * sizeof(float);
  }

  void merge(const Traffic& o) {
    for (std::size_t b = 0; b < words.size(); ++b) {
      words[b] += o.words[b];
      bytes[b] += o.bytes[b];
    }
  }
};

// Tile rows are dealt round-robin over the banks: local row i of every tile
// lives on bank i mod n_banks. Returns how many of `count` rows `bank` holds.
std::size_t rows_on_bank(std::size_t count, std::size_t bank, std::size_t n_banks) {
  return bank >= count ? 0 : (count - bank + n_banks - 1) / n_banks;
}

void load_a(Traffic& t, const TileSchedule& s, const TileOp& op, std::size_t bank) {
  const auto& c = s.config;
  t.add(bank, rows_on_bank(s.rows_in(op.mi), bank, c.n_banks), s.depth_in(op.ki), c.bus_width_bits);
}
void load_b(Traffic& t, const TileSchedule& s, const TileOp& op, std::size_t bank) {
  const auto& c = s.config;
  t.add(bank, rows_on_bank(s.depth_in(op.ki), bank, c.n_banks), s.cols_in(op.ni), c.bus_width_bits);
}
void store_c(Traffic& t, const TileSchedule& s, std::size_t mi, std::size_t ni) {
  const auto& c = s.config;
  for (std::size_t bank = 0; bank < c.n_banks; ++bank)
    t.add(bank, rows_on_bank(s.rows_in(mi), bank, c.n_banks), s.cols_in(ni), c.bus_width_bits);
}

}  // namespace

EngineCounters count_transfers(const TileSchedule& schedule) {
  Traffic t(schedule.config.n_banks);
  for (const auto& op : schedule.ops)
    for (std::size_t bank = 0; bank < schedule.config.n_banks; ++bank) {
      load_a(t, schedule, op, bank);
      load_b(t, schedule, op, bank);
    }
  for (std::size_t mi = 0; mi < schedule.tiles_m; ++mi)
    for (std::size_t ni = 0; ni < schedule.tiles_n; ++ni) store_c(t, schedule, mi, ni);

  EngineCounters c;
  c.tile_ops = schedule.ops.size();
  c.output_tiles = schedule.output_tiles();
  c.words_per_bank = std::move(t.words);
  c.payload_bytes_per_bank = std::move(t.bytes);
  return c;
}

Matrix gemm_reference(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw Error(ErrorCode::DimMismatch, "gemm: A is " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                            ", B is " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Matrix c(m, n);
  const float* pa = a.data().data();
  const float* pb = b.data().data();
  float* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (std::size_t p = 0; p < k; ++p) acc += pa[i * k + p] * pb[p * n + j];
      pc[i * n + j] = acc;
    }
  }
  return c;
}

namespace {

// Live-byte accounting for tile buffers, standing in for on-chip memory.
class TileMemory {
public:
  void acquire(std::size_t bytes) {
    const std::size_t now = live_.fetch_add(bytes, std::memory_order_relaxed) + bytes;
    std::size_t peak = peak_.load(std::memory_order_relaxed);
    while (now > peak && !peak_.compare_exchange_weak(peak, now, std::memory_order_relaxed)) {
    }
  }
  void release(std::size_t bytes) { live_.fetch_sub(bytes, std::memory_order_relaxed); }
  std::size_t peak() const { return peak_.load(); }

private:
  std::atomic<std::size_t> live_{0}, peak_{0};
};

class TileBuffer {
public:
  TileBuffer(TileMemory& mem, std::size_t floats) : mem_(&mem), data_(floats, 0.0f) {
    mem_->acquire(data_.size() * sizeof(float));
  }
  TileBuffer(TileBuffer&& o) noexcept : mem_(std::exchange(o.mem_, nullptr)), data_(std::move(o.data_)) {}
  TileBuffer& operator=(TileBuffer&&) = delete;
  TileBuffer(const TileBuffer&) = delete;
  ~TileBuffer() {
    if (mem_) mem_->release(data_.size() * sizeof(float));
  }

  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }

private:
  TileMemory* mem_;
  std::vector<float> data_;
};

struct OutputTile {
  std::size_t mi = 0, ni = 0;
  TileBuffer acc;
};

// acc[tm x tn] += a[tm x tk] * b[tk x tn]; per element the k order is ascending.
void mac_tile(float* __restrict acc, const float* __restrict a, const float* __restrict b, std::size_t tm,
              std::size_t tk, std::size_t tn) {
  for (std::size_t i = 0; i < tm; ++i) {
    float* __restrict crow = acc + i * tn;
    for (std::size_t p = 0; p < tk; ++p) {
      const float av = a[i * tk + p];
      const float* __restrict brow = b + p * tn;
      for (std::size_t j = 0; j < tn; ++j) crow[j] += av * brow[j];
    }
  }
}

class Pipeline {
public:
  Pipeline(const Matrix& a, const Matrix& b, const TileSchedule& s, std::size_t lanes)
      : a_(a), b_(b), s_(s), lanes_(lanes), writer_fifo_(s.config.stream_depth) {
    const std::size_t banks = s.config.n_banks;
    bank_fifos_.reserve(2 * lanes * banks);
    for (std::size_t i = 0; i < 2 * lanes * banks; ++i)
      bank_fifos_.push_back(std::make_unique<BoundedFifo<TileBuffer>>(s.config.stream_depth));
    for (std::size_t i = 0; i < lanes * banks; ++i) loader_traffic_.emplace_back(banks);
  }

  Matrix run(EngineCounters* counters) {
    const std::size_t banks = s_.config.n_banks;
    std::vector<std::jthread> threads;
    threads.reserve(lanes_ * (banks + 1));
    for (std::size_t lane = 0; lane < lanes_; ++lane) {
      for (std::size_t bank = 0; bank < banks; ++bank)
        threads.emplace_back([this, lane, bank] { guarded([&] { load(lane, bank); }); });
      threads.emplace_back([this, lane] { guarded([&] { multiply(lane); }); });
    }

    Matrix c(s_.shape.m, s_.shape.n);
    Traffic store(banks);
    guarded([&] { write(c, store); });
    threads.clear();  // joins
    if (error_) std::rethrow_exception(error_);

    if (counters) {
      Traffic total(banks);
      for (const auto& t : loader_traffic_) total.merge(t);
      total.merge(store);
      counters->tile_ops = tile_ops_.load();
      counters->output_tiles = s_.output_tiles();
      counters->words_per_bank = std::move(total.words);
      counters->payload_bytes_per_bank = std::move(total.bytes);
      counters->peak_live_tile_bytes = memory_.peak();
      counters->lanes = lanes_;
    }
    return c;
  }

private:
  std::size_t lane_of(const TileOp& op) const { return (op.mi * s_.tiles_n + op.ni) % lanes_; }
  // Each bank loader feeds two streams, one for A slices and one for B.
  enum Operand : std::size_t { kA = 0, kB = 1 };
  BoundedFifo<TileBuffer>& fifo(std::size_t lane, std::size_t bank, Operand which) {
    return *bank_fifos_[(lane * s_.config.n_banks + bank) * 2 + which];
  }

  template <typename F>
  void guarded(F&& body) {
    try {
      body();
    } catch (...) {
      {
        std::lock_guard lock(error_mutex_);
        if (!error_) error_ = std::current_exception();
      }
      for (auto& f : bank_fifos_) f->close();
      writer_fifo_.close();
    }
  }

  // Stage 1: one loader per (lane, bank). Walks the lane's ops in schedule
  // order and emits, for every op, the rows of the A tile and the rows of
  // the B tile that its bank holds, each on its own stream. Rows are packed; the width is the
  // full tile width, zero-padded.
  void load(std::size_t lane, std::size_t bank) {
    const auto& cfg = s_.config;
    const std::size_t nb = cfg.n_banks;
    auto& out_a = fifo(lane, bank, kA);
    auto& out_b = fifo(lane, bank, kB);
    Traffic& traffic = loader_traffic_[lane * nb + bank];
    for (const auto& op : s_.ops) {
      if (lane_of(op) != lane) continue;
      {
        if (!out_a.wait_for_space()) return;
        const std::size_t first = op.mi * cfg.tile_m, depth = s_.depth_in(op.ki);
        const std::size_t rows = rows_on_bank(s_.rows_in(op.mi), bank, nb);
        TileBuffer slice(memory_, rows * cfg.tile_k);
        for (std::size_t j = 0; j < rows; ++j) {
          const float* src = a_.data().data() + (first + bank + j * nb) * s_.shape.k + op.ki * cfg.tile_k;
          std::copy(src, src + depth, slice.data() + j * cfg.tile_k);
        }
        load_a(traffic, s_, op, bank);
        if (!out_a.push(std::move(slice))) return;
      }
      {
        if (!out_b.wait_for_space()) return;
        const std::size_t first = op.ki * cfg.tile_k, cols = s_.cols_in(op.ni);
        const std::size_t rows = rows_on_bank(s_.depth_in(op.ki), bank, nb);
        TileBuffer slice(memory_, rows * cfg.tile_n);
        for (std::size_t j = 0; j < rows; ++j) {
          const float* src = b_.data().data() + (first + bank + j * nb) * s_.shape.n + op.ni * cfg.tile_n;
          std::copy(src, src + cols, slice.data() + j * cfg.tile_n);
        }
        load_b(traffic, s_, op, bank);
        if (!out_b.push(std::move(slice))) return;
      }
    }
  }

  // Pops one slice from every bank and scatters its rows back into a
  // zero-padded tile of `width` columns.
  std::optional<TileBuffer> gather(std::size_t lane, Operand which, std::size_t valid_rows, std::size_t tile_rows,
                                   std::size_t width) {
    const std::size_t nb = s_.config.n_banks;
    TileBuffer tile(memory_, tile_rows * width);
    for (std::size_t bank = 0; bank < nb; ++bank) {
      auto slice = fifo(lane, bank, which).pop();
      if (!slice) return std::nullopt;
      const std::size_t rows = rows_on_bank(valid_rows, bank, nb);
      for (std::size_t j = 0; j < rows; ++j)
        std::copy(slice->data() + j * width, slice->data() + (j + 1) * width, tile.data() + (bank + j * nb) * width);
    }
    return tile;
  }

  // Stage 2: MAC. Consumes operand tiles in schedule order and forwards each
  // finished accumulator tile to the writer.
  void multiply(std::size_t lane) {
    const auto& cfg = s_.config;
    std::optional<OutputTile> current;
    for (const auto& op : s_.ops) {
      if (lane_of(op) != lane) continue;
      if (op.ki == 0) current.emplace(OutputTile{op.mi, op.ni, TileBuffer(memory_, cfg.tile_m * cfg.tile_n)});
      auto a = gather(lane, kA, s_.rows_in(op.mi), cfg.tile_m, cfg.tile_k);
      if (!a) return;
      auto b = gather(lane, kB, s_.depth_in(op.ki), cfg.tile_k, cfg.tile_n);
      if (!b) return;
      mac_tile(current->acc.data(), a->data(), b->data(), cfg.tile_m, cfg.tile_k, cfg.tile_n);
      tile_ops_.fetch_add(1, std::memory_order_relaxed);
      if (op.ki + 1 == s_.tiles_k) {
        OutputTile done = std::move(*current);
        current.reset();
        if (!writer_fifo_.push(std::move(done))) return;
      }
    }
  }

  // Stage 3: writer. Copies the valid region of each tile into C; padded
  // lanes are dropped here.
  void write(Matrix& c, Traffic& traffic) {
    const auto& cfg = s_.config;
    for (std::size_t t = 0; t < s_.output_tiles(); ++t) {
      auto tile = writer_fifo_.pop();
      if (!tile) return;
      const std::size_t rows = s_.rows_in(tile->mi), cols = s_.cols_in(tile->ni);
      for (std::size_t r = 0; r < rows; ++r) {
        const float* src = tile->acc.data() + r * cfg.tile_n;
        std::copy(src, src + cols, c.data().data() + (tile->mi * cfg.tile_m + r) * s_.shape.n + tile->ni * cfg.tile_n);
      }
      store_c(traffic, s_, tile->mi, tile->ni);
    }
  }

  const Matrix& a_;
  const Matrix& b_;
  const TileSchedule& s_;
  const std::size_t lanes_;

  TileMemory memory_;
  std::vector<std::unique_ptr<BoundedFifo<TileBuffer>>> bank_fifos_;
  BoundedFifo<OutputTile> writer_fifo_;
  std::vector<Traffic> loader_traffic_;  // one slot per loader, merged after join
  std::atomic<std::uint64_t> tile_ops_{0};

  std::mutex error_mutex_;
  std::exception_ptr error_;
};

}  // namespace

Matrix gemm_streamed(const Matrix& a, const Matrix& b, const EngineConfig& config, EngineCounters* counters) {
  if (a.cols() != b.rows())
    throw Error(ErrorCode::DimMismatch, "gemm: A is " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                            ", B is " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  const TileSchedule schedule = plan_tiles({a.rows(), a.cols(), b.cols()}, config);
  const std::size_t lanes = std::min(resolve_threads(config), schedule.output_tiles());
  Pipeline pipeline(a, b, schedule, lanes);
  return pipeline.run(counters);
}

}  // namespace streamgemm
