#include "streamgemm/bench.hpp"

#include <algorithm>
#include <chrono>
#include <random>

namespace streamgemm {

std::string to_string(VerifyMode mode) {
  switch (mode) {
    case VerifyMode::Auto: return "auto";
    case VerifyMode::Full: return "full";
    case VerifyMode::Spot: return "spot";
  }
  return "auto";
}

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  Matrix m(rows, cols);
  for (float& v : m.data()) v = dist(rng);
  return m;
}

std::vector<std::size_t> spot_rows(std::size_t m, std::size_t count) {
  count = std::clamp<std::size_t>(count, 1, m);
  std::vector<std::size_t> rows;
  if (count == 1) return {0};
  for (std::size_t i = 0; i < count; ++i) rows.push_back(i * (m - 1) / (count - 1));
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  return rows;
}

namespace {

template <typename F>
Timing time_repeated(std::size_t repeats, F&& body) {
  std::vector<double> samples;
  for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    body();
    const auto t1 = std::chrono::steady_clock::now();
    samples.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  const double median = n % 2 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
  return {median, samples.front(), samples.back()};
}

Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = m.row(rows[i]);
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * m.cols()));
  }
  return out;
}

}  // namespace

BenchResult run_bench(const GemmShape& shape, const EngineConfig& config, const BenchOptions& options) {
  config.validate();
  if (shape.m == 0 || shape.k == 0 || shape.n == 0) throw Error(ErrorCode::InvalidValue, "GEMM dims must be positive");

  BenchResult res;
  res.shape = shape;
  const Matrix a = random_matrix(shape.m, shape.k, options.seed);
  const Matrix b = random_matrix(shape.k, shape.n, options.seed + 1);

  Matrix streamed;
  res.streamed = time_repeated(options.repeats, [&] { streamed = gemm_streamed(a, b, config, &res.counters); });

  VerifyMode mode = options.verify;
  if (mode == VerifyMode::Auto) mode = shape.flops() <= options.full_verify_flop_limit ? VerifyMode::Full : VerifyMode::Spot;
  res.verified_with = mode;

  if (mode == VerifyMode::Full) {
    Matrix ref;
    res.reference = time_repeated(options.repeats, [&] { ref = gemm_reference(a, b); });
    res.equal = bitwise_equal(ref.data(), streamed.data());
  } else {
    res.checked_rows = spot_rows(shape.m, options.spot_rows);
    const Matrix a_rows = take_rows(a, res.checked_rows);
    Matrix ref_rows;
    Timing t = time_repeated(options.repeats, [&] { ref_rows = gemm_reference(a_rows, b); });
    const double scale = static_cast<double>(shape.m) / static_cast<double>(res.checked_rows.size());
    res.reference = {t.median * scale, t.min * scale, t.max * scale};
    res.reference_extrapolated = true;
    res.equal = bitwise_equal(ref_rows.data(), take_rows(streamed, res.checked_rows).data());
  }
  return res;
}

std::vector<ReportRow> bench_rows(const BenchResult& r) {
  if (!r.equal)
    throw Error(ErrorCode::DimMismatch, "streamed result differs from the reference; refusing to report timings");
  const double flops = static_cast<double>(r.shape.flops());
  const auto row = [&](const char* label, const char* engine, const Timing& t) {
    return ReportRow{label, r.shape.m, r.shape.k, r.shape.n, engine, t.median, flops / t.median / 1e9, std::nullopt};
  };
  return {row("reference", r.reference_extrapolated ? "reference-extrapolated" : "reference", r.reference),
          row("streamed", "streamed", r.streamed)};
}

}  // namespace streamgemm
