#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "streamgemm/bench.hpp"
#include "streamgemm/darknet.hpp"
#include "streamgemm/perf_model.hpp"
#include "streamgemm/report.hpp"
#include "streamgemm/runtime.hpp"

namespace streamgemm::cli {

namespace {

void add_engine_flags(CLI::App& cmd, EngineConfig& cfg) {
  cmd.add_option("--tile-m", cfg.tile_m, "Tile rows of A/C")->check(CLI::PositiveNumber);
  cmd.add_option("--tile-k", cfg.tile_k, "Tile depth")->check(CLI::PositiveNumber);
  cmd.add_option("--tile-n", cfg.tile_n, "Tile columns of B/C")->check(CLI::PositiveNumber);
  cmd.add_option("--banks", cfg.n_banks, "Memory banks")->check(CLI::PositiveNumber);
  cmd.add_option("--bus-bits", cfg.bus_width_bits, "Bus width in bits (multiple of 32)")->check(CLI::PositiveNumber);
  cmd.add_option("--stream-depth", cfg.stream_depth, "FIFO capacity in tiles")->check(CLI::PositiveNumber);
  cmd.add_option("--threads", cfg.threads, "Worker lanes (0 = hardware)");
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimMismatch:
    case ErrorCode::UnsupportedLayer: return kExitRuntime;
    default: return kExitUsage;
  }
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  f << text;
}

std::string read_text(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

DevicePreset resolve_preset(const std::string& arg) {
  if (std::filesystem::is_regular_file(arg)) {
    try {
      return load_preset(arg);
    } catch (const Error& e) {
      throw Error(e.code(), "'" + arg + "': " + e.what());
    }
  }
  return builtin_preset(arg);
}

// --- run -------------------------------------------------------------------

struct RunArgs {
  std::string cfg, weights, input, out;
  EngineConfig engine;
};

int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
  NetworkGraph graph;
  try {
    graph = load_cfg(a.cfg);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io) throw;
    throw Error(e.code(), "'" + a.cfg + "': " + e.what());
  }
  for (const auto& w : graph.warnings) err << "warning: " << a.cfg << ": " << w << "\n";

  const WeightedNetwork net = load_weights_file(a.weights, graph);
  Tensor input;
  try {
    input = read_raw_tensor(a.input);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io) throw;
    throw Error(e.code(), "'" + a.input + "': " + e.what());
  }

  const Tensor y = forward(net, input, a.engine);
  write_raw_tensor(a.out, y);

  const auto& d = y.dims();
  out << "output " << d.n << "x" << d.c << "x" << d.h << "x" << d.w << " -> " << a.out;
  if (graph.layers.back().kind == LayerKind::Softmax) {
    const auto v = y.data();
    const auto best = std::max_element(v.begin(), v.end());
    out << " argmax=" << (best - v.begin()) << " value=" << std::setprecision(9) << *best;
  }
  out << "\n";
  return kExitOk;
}

// --- bench -----------------------------------------------------------------

struct BenchArgs {
  std::size_t m = 0, k = 0, n = 0;
  std::size_t repeat = 5;
  std::vector<std::string> presets;
  std::string csv, model_csv, host, verify = "auto";
  bool model_only = false;
  std::uint64_t seed = 42;
  EngineConfig engine;
};

void print_row(std::ostream& out, const ReportRow& r) {
  out << std::left << std::setw(24) << r.label << std::setw(24) << r.engine << std::right << std::scientific
      << std::setprecision(4) << std::setw(13) << r.seconds << " s" << std::fixed << std::setprecision(3)
      << std::setw(13) << r.gflops << " GFLOPS";
  if (r.gflops_per_watt) out << std::setw(12) << *r.gflops_per_watt << " GFLOPS/W";
  out << "\n";
  out.unsetf(std::ios::floatfield);
}

int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  const GemmShape shape{a.m, a.k, a.n};
  a.engine.validate();

  std::vector<DevicePreset> presets;
  for (const auto& p : a.presets) presets.push_back(resolve_preset(p));

  out << "shape M=" << shape.m << " K=" << shape.k << " N=" << shape.n << " flops=" << shape.flops() << "\n";

  std::vector<ReportRow> measured;
  std::vector<std::pair<std::string, std::string>> meta;
  meta.emplace_back("timestamp", utc_timestamp());
  if (!a.host.empty()) meta.emplace_back("host", a.host);
  meta.emplace_back("threads", std::to_string(resolve_threads(a.engine)));

  if (!a.model_only) {
    BenchOptions opts;
    opts.repeats = a.repeat;
    opts.seed = a.seed;
    opts.verify = a.verify == "full" ? VerifyMode::Full : a.verify == "spot" ? VerifyMode::Spot : VerifyMode::Auto;
    const BenchResult r = run_bench(shape, a.engine, opts);
    out << "equal=" << (r.equal ? "true" : "false") << " verify=" << to_string(r.verified_with);
    if (r.verified_with == VerifyMode::Spot) out << " rows=" << r.checked_rows.size();
    out << "\n";
    if (!r.equal) {
      err << "error: streamed engine output differs from the reference\n";
      return kExitRuntime;
    }
    measured = bench_rows(r);
    meta.emplace_back("equal", "true");
    meta.emplace_back("verify", to_string(r.verified_with));
    const auto spread = [](const Timing& t) {
      std::ostringstream ss;
      ss << std::setprecision(17) << t.min << "," << t.median << "," << t.max;
      return ss.str();
    };
    meta.emplace_back("timing.reference.min_median_max", spread(r.reference));
    meta.emplace_back("timing.streamed.min_median_max", spread(r.streamed));
    meta.emplace_back("repeats", std::to_string(a.repeat));
  }

  Comparison cmp = compare(presets, shape, a.engine, measured);
  for (auto& kv : meta) cmp.report.metadata.push_back(kv);

  for (const auto& row : cmp.report.rows) print_row(out, row);
  if (!cmp.ratios.empty()) out << format_ratio_table(cmp.ratios, cmp.baseline);

  if (!a.csv.empty()) write_text(a.csv, report_to_csv(cmp.report));
  if (!a.model_csv.empty()) write_text(a.model_csv, estimates_csv(cmp.estimates));
  return kExitOk;
}

// --- report ----------------------------------------------------------------

struct ReportArgs {
  std::string baseline;
  std::vector<std::string> csv;
  std::string out;
};

int cmd_report(const ReportArgs& a, std::ostream& out, std::ostream&) {
  std::vector<BenchmarkReport> inputs;
  for (const auto& path : a.csv) {
    try {
      inputs.push_back(parse_report_csv(read_text(path)));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Io) throw;
      throw Error(e.code(), "'" + path + "': " + e.what());
    }
  }
  const BenchmarkReport merged = merge_reports(inputs);
  const auto ratios = ratio_table(merged, a.baseline);

  write_text(a.out, report_to_csv(merged));
  for (const char* metric : {"seconds", "gflops", "gflops_per_watt"})
    write_text(a.out + "." + metric + ".dat", plot_data(merged, metric));

  std::ostringstream rc;
  rc << std::setprecision(17) << "label,speedup,gflops_ratio,gflops_per_watt_ratio\n";
  for (const auto& r : ratios) {
    rc << r.label << "," << r.speedup << "," << r.gflops_ratio << ",";
    if (r.gflops_per_watt_ratio) rc << *r.gflops_per_watt_ratio;
    rc << "\n";
  }
  write_text(a.out + ".ratios.csv", rc.str());

  out << format_ratio_table(ratios, a.baseline);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Streamed, bank-partitioned tiled GEMM engine for FP32 CNN inference"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Run a Darknet network on a raw tensor");
  run_cmd->add_option("--cfg", run_args.cfg, "Network .cfg")->required();
  run_cmd->add_option("--weights", run_args.weights, "Darknet .weights")->required();
  run_cmd->add_option("--input", run_args.input, "Input raw tensor")->required();
  run_cmd->add_option("--out", run_args.out, "Output raw tensor")->required();
  add_engine_flags(*run_cmd, run_args.engine);

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("bench", "Time reference vs streamed GEMM and model device presets");
  bench_cmd->add_option("--m", bench_args.m, "Rows of A")->required()->check(CLI::PositiveNumber);
  bench_cmd->add_option("--k", bench_args.k, "Shared dimension")->required()->check(CLI::PositiveNumber);
  bench_cmd->add_option("--n", bench_args.n, "Columns of B")->required()->check(CLI::PositiveNumber);
  bench_cmd->add_option("--repeat", bench_args.repeat, "Timed repetitions (median reported)")
      ->check(CLI::PositiveNumber);
  bench_cmd->add_option("--preset", bench_args.presets, "Preset file or built-in name (repeatable)");
  bench_cmd->add_option("--csv", bench_args.csv, "Write the report CSV here");
  bench_cmd->add_option("--model-csv", bench_args.model_csv, "Write per-preset cycle/energy estimates here");
  bench_cmd->add_option("--host", bench_args.host, "Free-text host description recorded in the report");
  bench_cmd->add_option("--verify", bench_args.verify, "Equality check: auto, full or spot")
      ->check(CLI::IsMember({"auto", "full", "spot"}));
  bench_cmd->add_option("--seed", bench_args.seed, "Operand RNG seed");
  bench_cmd->add_flag("--model-only", bench_args.model_only, "Skip measurement; emit preset rows only");
  add_engine_flags(*bench_cmd, bench_args.engine);

  ReportArgs report_args;
  auto* report_cmd = app.add_subcommand("report", "Merge report CSVs and emit ratio and plot data");
  report_cmd->add_option("--baseline", report_args.baseline, "Label every row is normalized to")->required();
  report_cmd->add_option("--csv", report_args.csv, "Input report CSVs")->required()->expected(1, -1);
  report_cmd->add_option("--out", report_args.out, "Merged CSV path; plot data goes to <out>.<metric>.dat")
      ->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*run_cmd) return cmd_run(run_args, out, err);
    if (*bench_cmd) return cmd_bench(bench_args, out, err);
    if (*report_cmd) return cmd_report(report_args, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace streamgemm::cli
