// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "streamgemm/bench.hpp"
#include "streamgemm/darknet.hpp"
#include "streamgemm/engine.hpp"
#include "streamgemm/perf_model.hpp"
#include "streamgemm/runtime.hpp"
#include "support/corpus.hpp"
#include "support/oracles.hpp"

using namespace streamgemm;

namespace {

// Collects failed expectations for one criterion; keeps the first message.
class Checks {
public:
  void expect(bool ok, const std::string& what) {
    ++total_;
    if (ok) return;
    if (failed_++ == 0) first_ = what;
  }
  void note(const std::string& s) { notes_ += (notes_.empty() ? "" : ", ") + s; }

  bool ok() const { return failed_ == 0; }
  std::string summary() const {
    std::ostringstream ss;
    ss << total_ - failed_ << "/" << total_ << " checks";
    if (!notes_.empty()) ss << ", " << notes_;
    if (failed_) ss << "; first failure: " << first_;
    return ss.str();
  }

private:
  std::size_t total_ = 0, failed_ = 0;
  std::string first_, notes_;
};

template <typename T>
std::string str(const T& v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  return Matrix(r, c, oracle::random_floats(rng, r * c));
}

WeightedNetwork with_random_weights(const NetworkGraph& g, std::mt19937_64& rng) {
  WeightedNetwork net{g, {}, {}};
  for (auto& l : net.graph.layers) {
    LayerWeights w;
    if (l.has_parameters()) {
      w.weights = oracle::random_floats(rng, l.weight_count());
      w.biases = oracle::random_floats(rng, l.bias_count());
    }
    l.batch_normalize = false;
    net.layers.push_back(std::move(w));
  }
  return net;
}

std::size_t close_count(std::span<const float> got, const std::vector<double>& want, double rel) {
  if (got.size() != want.size()) return 0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < want.size(); ++i) ok += oracle::close(got[i], want[i], rel, 1e-5);
  return ok;
}

void criterion_bitwise(Checks& c) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  const std::size_t tiles[] = {8, 16, 64}, banks[] = {1, 2, 4}, depths[] = {1, 2, 4};
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng() % 257, k = 1 + rng() % 257, n = 1 + rng() % 257;
    EngineConfig cfg;
    cfg.tile_m = tiles[rng() % 3];
    cfg.tile_k = tiles[rng() % 3];
    cfg.tile_n = tiles[rng() % 3];
    cfg.n_banks = banks[rng() % 3];
    cfg.stream_depth = depths[rng() % 3];
    const Matrix a = random_matrix(rng, m, k), b = random_matrix(rng, k, n);
    const Matrix want = gemm_reference(a, b);
    const Matrix got = gemm_streamed(a, b, cfg);
    c.expect(got.rows() == m && got.cols() == n && bitwise_equal(got.data(), want.data()),
             "trial " + str(trial) + " " + str(m) + "x" + str(k) + "x" + str(n));
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 60.0, "runtime " + str(secs) + " s");
  c.note("200 pairs in " + str(std::round(secs * 10) / 10) + " s");
}

void criterion_large_shape(Checks& c) {
  const GemmShape shape{2048, 4096, 16384};
  c.expect(shape.flops() == 274877906944ULL, "flops " + str(shape.flops()));
  const auto t0 = std::chrono::steady_clock::now();
  BenchOptions opt;
  opt.repeats = 1;
  opt.verify = VerifyMode::Spot;
  opt.spot_rows = 4;
  const BenchResult r = run_bench(shape, EngineConfig{}, opt);
  const double secs = seconds_since(t0);
  c.expect(r.verified_with == VerifyMode::Spot && r.checked_rows.size() == 4, "spot rows");
  c.expect(r.equal, "spot check mismatch");
  c.expect(r.counters.tile_ops == plan_tiles(shape, EngineConfig{}).ops.size(), "tile op count");
  c.expect(secs < 600.0, "runtime " + str(secs) + " s");
  c.note("flops=" + str(shape.flops()) + ", streamed " + str(std::round(r.streamed.median * 10) / 10) +
         " s, total " + str(std::round(secs)) + " s");
}

void criterion_lowering(Checks& c) {
  std::mt19937_64 rng(31);
  const char* acts[] = {"linear", "leaky", "relu", "logistic"};
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t size = 1 + rng() % 5, stride = 1 + rng() % 3, pad = rng() % (size + 1);
    const std::size_t ch = 1 + rng() % 4, f = 1 + rng() % 8;
    std::size_t h = size + rng() % 9, w = size + rng() % 9;
    h += (stride - (h + 2 * pad - size) % stride) % stride;
    w += (stride - (w + 2 * pad - size) % stride) % stride;
    std::ostringstream cfg;
    cfg << "[net]\nchannels=" << ch << "\nheight=" << h << "\nwidth=" << w << "\n[convolutional]\nfilters=" << f
        << "\nsize=" << size << "\nstride=" << stride << "\npadding=" << pad << "\nactivation=" << acts[rng() % 4]
        << "\n";
    const auto net = with_random_weights(parse_cfg(cfg.str()), rng);
    const Tensor x = oracle::random_tensor(rng, ch, h, w);
    std::size_t oh = 0, ow = 0;
    const auto want = oracle::direct_conv(x, net.layers[0].weights, net.layers[0].biases, f, size, stride, pad,
                                          net.graph.layers[0].activation, oh, ow);
    EngineConfig ec;
    ec.tile_m = ec.tile_k = ec.tile_n = 8 << (rng() % 3);
    const Tensor got = forward(net, x, ec);
    c.expect(got.dims() == Dims4{1, f, oh, ow} && close_count(got.data(), want, 1e-4) == want.size(),
             "conv trial " + str(trial));
  }

  for (int trial = 0; trial < 50; ++trial) {
    // adjoint: <im2col(x), y> == <x, col2im(y)>
    const std::size_t size = 1 + rng() % 4, stride = 1 + rng() % 3, pad = rng() % 3, ch = 1 + rng() % 4;
    std::size_t h = size + rng() % 7, w = size + rng() % 7;
    h += (stride - (h + 2 * pad - size) % stride) % stride;
    w += (stride - (w + 2 * pad - size) % stride) % stride;
    const Tensor x = oracle::random_tensor(rng, ch, h, w);
    const Matrix cols = im2col(x, size, stride, pad);
    const Matrix y = random_matrix(rng, cols.rows(), cols.cols());
    const Tensor back = col2im(y, ch, h, w, size, stride, pad);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < cols.data().size(); ++i) lhs += double(cols.data()[i]) * y.data()[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += double(x.data()[i]) * back.data()[i];
    c.expect(oracle::close(lhs, rhs, 1e-4, 1e-6), "adjoint trial " + str(trial));

    // the deconv layer built on col2im matches the direct scatter
    const std::size_t f = 1 + rng() % 4, dh = 1 + rng() % 6, dw = 1 + rng() % 6;
    const std::size_t dpad = rng() % size;
    if ((dh - 1) * stride + size <= 2 * dpad || (dw - 1) * stride + size <= 2 * dpad) continue;
    std::ostringstream cfg;
    cfg << "[net]\nchannels=" << ch << "\nheight=" << dh << "\nwidth=" << dw << "\n[deconvolutional]\nfilters=" << f
        << "\nsize=" << size << "\nstride=" << stride << "\npadding=" << dpad << "\nactivation=linear\n";
    const auto net = with_random_weights(parse_cfg(cfg.str()), rng);
    const auto& l = net.graph.layers[0];
    const Tensor dx = oracle::random_tensor(rng, ch, dh, dw);
    const auto want = oracle::direct_deconv(dx, net.layers[0].weights, net.layers[0].biases, f, size, stride, dpad,
                                            Activation::Linear, l.out_dims.h, l.out_dims.w);
    const Tensor got = forward(net, dx, EngineConfig{});
    c.expect(close_count(got.data(), want, 1e-4) == want.size(), "deconv trial " + str(trial));
  }
}

ErrorCode parse_error(const std::string& text) {
  try {
    parse_cfg(text);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;
}

void criterion_frontend(Checks& c) {
  std::mt19937_64 rng(17);
  std::size_t files = 0;
  for (const auto& k : corpus::cases()) {
    ++files;
    const std::string text = corpus::read_cfg(k.file);
    if (k.out_dims.empty()) {
      c.expect(parse_error(text) == k.error, std::string(k.file) + " error code");
      continue;
    }
    const NetworkGraph g = parse_cfg(text);
    bool dims = g.layers.size() == k.out_dims.size();
    Shape3 in = g.input_dims;
    for (std::size_t i = 0; dims && i < g.layers.size(); ++i) {
      dims = g.layers[i].in_dims == in && g.layers[i].out_dims == k.out_dims[i];
      in = g.layers[i].out_dims;
    }
    c.expect(dims, std::string(k.file) + " graph");

    const auto bytes = corpus::random_weights_file(g, rng);
    const auto net = load_weights(bytes, g);
    const auto saved = save_weights(net);
    const auto again = load_weights(saved, net.graph);
    bool same = again.layers.size() == net.layers.size() && save_weights(again) == saved;
    for (std::size_t i = 0; same && i < net.layers.size(); ++i)
      same = bitwise_equal(again.layers[i].weights, net.layers[i].weights) &&
             bitwise_equal(again.layers[i].biases, net.layers[i].biases);
    c.expect(same, std::string(k.file) + " weights round-trip");
  }
  c.expect(files >= 10, "corpus has " + str(files) + " files");

  bool kinds[6] = {};
  for (const auto& k : corpus::cases())
    if (!k.out_dims.empty())
      for (const auto& l : parse_cfg(corpus::read_cfg(k.file)).layers) kinds[static_cast<int>(l.kind)] = true;
  for (bool seen : kinds) c.expect(seen, "corpus covers every layer kind");
  c.note(str(files) + " corpus files");

  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t ch = 1 + rng() % 3, f = 1 + rng() % 4, size = 1 + 2 * (rng() % 2), h = 3 + rng() % 4;
    const Tensor x = oracle::random_tensor(rng, ch, h, h);
    const auto w = oracle::random_floats(rng, f * ch * size * size);
    const auto b = oracle::random_floats(rng, f);
    const BatchNorm bn{oracle::random_floats(rng, f, 0.5f, 2.0f), oracle::random_floats(rng, f),
                       oracle::random_floats(rng, f), oracle::random_floats(rng, f, 0.0f, 2.0f)};
    const auto [wf, bf] = fold_batchnorm(w, b, bn);
    std::size_t oh = 0, ow = 0;
    const auto folded = oracle::direct_conv(x, wf, bf, f, size, 1, size / 2, Activation::Linear, oh, ow);
    const auto raw = oracle::direct_conv(x, w, b, f, size, 1, size / 2, Activation::Linear, oh, ow);
    bool ok = true;
    for (std::size_t fi = 0; fi < f; ++fi)
      for (std::size_t i = 0; i < oh * ow; ++i) {
        const double want =
            bn.gamma[fi] * (raw[fi * oh * ow + i] - bn.mean[fi]) / std::sqrt(double(bn.var[fi]) + 1e-6) + bn.beta[fi];
        ok = ok && oracle::close(folded[fi * oh * ow + i], want, 1e-4, 1e-5);
      }
    c.expect(ok, "batchnorm fold trial " + str(trial));
  }
}

PerfEstimate estimate_for(const GemmShape& shape, const EngineConfig& cfg, const DevicePreset& p) {
  const auto s = plan_tiles(shape, cfg);
  return estimate(s, count_transfers(s), p);
}

EngineConfig tiles(std::size_t tm, std::size_t tk, std::size_t tn, std::size_t banks = 1) {
  EngineConfig c;
  c.tile_m = tm;
  c.tile_k = tk;
  c.tile_n = tn;
  c.n_banks = banks;
  return c;
}

void criterion_perf_model(Checks& c) {
  std::mt19937_64 rng(404);
  const std::size_t sizes[] = {4, 8, 16};
  for (int trial = 0; trial < 50; ++trial) {
    EngineConfig cfg = tiles(sizes[rng() % 3], sizes[rng() % 3], sizes[rng() % 3], 1 + rng() % 4);
    cfg.stream_depth = 1 + rng() % 3;
    cfg.bus_width_bits = 32 << (rng() % 5);
    const DevicePreset p{"des", 1e9, 1 + rng() % 512, 1.0 + static_cast<double>(rng() % 64), 8, 1.0, 1e-12, 1e-12};
    const GemmShape shape{1 + rng() % 60, 1 + rng() % 60, 1 + rng() % 60};
    const auto s = plan_tiles(shape, cfg);
    const auto e = estimate(s, count_transfers(s), p);
    const std::uint64_t sim = oracle::simulate_pipeline(s, p);
    const std::uint64_t diff = sim > e.total_cycles ? sim - e.total_cycles : e.total_cycles - sim;
    c.expect(diff <= e.fill_latency, "schedule " + str(trial) + ": analytic " + str(e.total_cycles) + " vs event " +
                                         str(sim) + ", fill " + str(e.fill_latency));
  }

  std::mt19937_64 sweep(55);
  for (int trial = 0; trial < 100; ++trial) {
    const GemmShape shape{1 + sweep() % 700, 1 + sweep() % 700, 1 + sweep() % 700};
    const DevicePreset p{"mono", 1e9, 1 + sweep() % 2048, 1.0 + static_cast<double>(sweep() % 128), 16, 1.0, 1e-12,
                         1e-12};
    const std::size_t t = 16 << (sweep() % 3), banks_fixed = 1 + sweep() % 4;
    std::uint64_t prev = UINT64_MAX;
    for (std::size_t bits = 32; bits <= 2048; bits += 32) {
      EngineConfig cfg = tiles(t, t, t, banks_fixed);
      cfg.bus_width_bits = bits;
      const auto total = estimate_for(shape, cfg, p).total_cycles;
      c.expect(total <= prev, "bus width " + str(bits) + " slower");
      prev = total;
    }
    prev = UINT64_MAX;
    for (std::size_t banks = 1; banks <= p.n_banks_max; ++banks) {
      const auto total = estimate_for(shape, tiles(t, t, t, banks), p).total_cycles;
      c.expect(total <= prev, "banks " + str(banks) + " slower");
      prev = total;
    }
    prev = UINT64_MAX;
    for (std::uint64_t macs = 1; macs <= 4096; macs = macs * 3 / 2 + 1) {
      DevicePreset q = p;
      q.macs_per_cycle = macs;
      const auto total = estimate_for(shape, tiles(t, t, t), q).total_cycles;
      c.expect(total <= prev, "macs " + str(macs) + " slower");
      prev = total;
    }
  }

  for (std::size_t tk : {8, 16, 32, 64}) {
    // one tile, a MAC per output element and a bus fast enough to hide transfers
    EngineConfig cfg = tiles(16, tk, 16);
    cfg.bus_width_bits = 1 << 14;
    const DevicePreset p{"single", 1e9, 16 * 16, 1e6, 64, 1.0, 1e-12, 1e-12};
    const auto e = estimate_for({16, tk, 16}, cfg, p);
    c.expect(e.total_cycles == tk + e.fill_latency, "single tile tile_k=" + str(tk));
  }
}

void criterion_desk_performance(Checks& c) {
  const unsigned hw = std::thread::hardware_concurrency();
  BenchOptions opt;
  opt.repeats = 3;
  opt.verify = VerifyMode::Full;
  const BenchResult r = run_bench({1024, 1024, 1024}, EngineConfig{}, opt);
  const double speedup = r.reference.median / r.streamed.median;
  c.expect(r.equal, "streamed result differs from the reference");
  c.expect(speedup >= 2.0, "speedup " + str(speedup));
  c.note("hardware threads=" + str(hw) + ", speedup " + str(std::round(speedup * 10) / 10) + "x");
  if (hw < 4) c.note("below the 4-thread precondition, bound checked anyway");
}

void criterion_determinism(Checks& c) {
  std::mt19937_64 rng(9);
  const auto g = parse_cfg(corpus::read_cfg("encoder_decoder.cfg"));
  const auto net = load_weights(corpus::random_weights_file(g, rng), g);
  const Tensor x = oracle::random_tensor(rng, g.input_dims.c, g.input_dims.h, g.input_dims.w);
  const auto cls = parse_cfg(corpus::read_cfg("classifier.cfg"));
  const auto cls_net = load_weights(corpus::random_weights_file(cls, rng), cls);
  const Tensor cx = oracle::random_tensor(rng, cls.input_dims.c, cls.input_dims.h, cls.input_dims.w);
  const Matrix a = random_matrix(rng, 300, 200), b = random_matrix(rng, 200, 150);

  EngineConfig base;
  base.tile_m = base.tile_k = base.tile_n = 16;
  base.threads = 1;
  const Tensor y0 = forward(net, x, base), cy0 = forward(cls_net, cx, base);
  const Matrix c0 = gemm_streamed(a, b, base);
  BenchOptions opt;
  opt.repeats = 1;
  const bool eq0 = run_bench({96, 80, 72}, base, opt).equal;

  for (std::size_t threads : {1, 2, 3, 4, 8}) {
    for (int rep = 0; rep < 3; ++rep) {
      EngineConfig cfg = base;
      cfg.threads = threads;
      cfg.stream_depth = 1 + rep;
      c.expect(forward(net, x, cfg) == y0, "forward threads=" + str(threads));
      c.expect(forward(cls_net, cx, cfg) == cy0, "classifier threads=" + str(threads));
      c.expect(bitwise_equal(gemm_streamed(a, b, cfg).data(), c0.data()), "gemm threads=" + str(threads));
      c.expect(run_bench({96, 80, 72}, cfg, opt).equal == eq0 && eq0, "bench equal flag threads=" + str(threads));
    }
  }
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<void(Checks&)> run;
  };
  const std::vector<Criterion> criteria{
      {"1 bitwise oracle equivalence", criterion_bitwise},
      {"2 2048x4096x16384 execution", criterion_large_shape},
      {"3 lowering correctness", criterion_lowering},
      {"4 frontend fidelity", criterion_frontend},
      {"5 perf-model soundness", criterion_perf_model},
      {"6 desk-scale performance", criterion_desk_performance},
      {"7 determinism", criterion_determinism},
  };
  int failed = 0;
  for (const auto& k : criteria) {
    Checks c;
    try {
      k.run(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    std::printf("%s criterion %s (%s)\n", c.ok() ? "PASS" : "FAIL", k.name, c.summary().c_str());
    std::fflush(stdout);
    failed += !c.ok();
  }
  return failed == 0 ? 0 : 1;
}
