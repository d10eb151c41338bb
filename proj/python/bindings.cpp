#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>

#include "streamgemm/darknet.hpp"
#include "streamgemm/engine.hpp"
#include "streamgemm/perf_model.hpp"
#include "streamgemm/runtime.hpp"

namespace py = pybind11;
using namespace streamgemm;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const FloatArray& a) {
  if (a.ndim() != 2) throw Error(ErrorCode::DimMismatch, "expected a 2-D array");
  const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
  return Matrix(rows, cols, std::vector<float>(a.data(), a.data() + rows * cols));
}

FloatArray to_array(const Matrix& m) {
  FloatArray out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

EngineConfig make_config(std::size_t tile_m, std::size_t tile_k, std::size_t tile_n, std::size_t banks,
                         std::size_t bus_bits, std::size_t stream_depth, std::size_t threads) {
  EngineConfig c;
  c.tile_m = tile_m;
  c.tile_k = tile_k;
  c.tile_n = tile_n;
  c.n_banks = banks;
  c.bus_width_bits = bus_bits;
  c.stream_depth = stream_depth;
  c.threads = threads;
  c.validate();
  return c;
}

#define ENGINE_ARGS                                                                                         \
  py::kw_only(), py::arg("tile_m") = 64, py::arg("tile_k") = 64, py::arg("tile_n") = 64, py::arg("banks") = 4, \
      py::arg("bus_bits") = 512, py::arg("stream_depth") = 2, py::arg("threads") = 0

// A parsed network with folded parameters, ready to run.
class Network {
public:
  Network(const std::string& cfg, const std::string& weights)
      : net_(load_weights_file(weights, load_cfg(cfg))) {}

  py::tuple input_shape() const { return shape(net_.graph.input_dims); }
  py::tuple output_shape() const { return shape(net_.graph.output_dims()); }
  std::size_t layers() const { return net_.graph.layers.size(); }

  FloatArray forward(const FloatArray& x, const EngineConfig& config) const {
    const Shape3 in = net_.graph.input_dims;
    if (static_cast<std::size_t>(x.size()) != in.count())
      throw Error(ErrorCode::DimMismatch, "input has " + std::to_string(x.size()) + " elements, network expects " +
                                              to_string(in));
    Tensor t(in.as_dims(), std::vector<float>(x.data(), x.data() + x.size()));
    Tensor y;
    {
      py::gil_scoped_release release;
      y = streamgemm::forward(net_, t, config);
    }
    const Shape3 out = net_.graph.output_dims();
    FloatArray result({out.c, out.h, out.w});
    std::copy(y.data().begin(), y.data().end(), result.mutable_data());
    return result;
  }

private:
  static py::tuple shape(const Shape3& s) { return py::make_tuple(s.c, s.h, s.w); }
  WeightedNetwork net_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Streamed tiled GEMM engine and CNN runtime";

  // Kept alive for the interpreter's lifetime; the module also holds a reference.
  static py::handle error_type = py::exception<Error>(m, "StreamGemmError").release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = error_type(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  m.def(
      "gemm_reference",
      [](const FloatArray& a, const FloatArray& b) {
        const Matrix ma = to_matrix(a), mb = to_matrix(b);
        Matrix c;
        {
          py::gil_scoped_release release;
          c = gemm_reference(ma, mb);
        }
        return to_array(c);
      },
      py::arg("a"), py::arg("b"), "Naive triple-loop C = A B in float32.");

  m.def(
      "gemm_streamed",
      [](const FloatArray& a, const FloatArray& b, std::size_t tm, std::size_t tk, std::size_t tn, std::size_t banks,
         std::size_t bus, std::size_t depth, std::size_t threads) {
        const EngineConfig cfg = make_config(tm, tk, tn, banks, bus, depth, threads);
        const Matrix ma = to_matrix(a), mb = to_matrix(b);
        Matrix c;
        {
          py::gil_scoped_release release;
          c = gemm_streamed(ma, mb, cfg);
        }
        return to_array(c);
      },
      py::arg("a"), py::arg("b"), ENGINE_ARGS,
      "Tiled, pipelined C = A B; bitwise equal to gemm_reference.");

  m.def(
      "estimate",
      [](std::size_t mm, std::size_t k, std::size_t n, const std::string& preset, std::size_t tm, std::size_t tk,
         std::size_t tn, std::size_t banks, std::size_t bus, std::size_t depth, std::size_t threads) {
        const EngineConfig cfg = make_config(tm, tk, tn, banks, bus, depth, threads);
        const auto s = plan_tiles({mm, k, n}, cfg);
        const auto e = streamgemm::estimate(s, count_transfers(s), builtin_preset(preset));
        py::dict d;
        d["flops"] = e.flops;
        d["compute_cycles"] = e.compute_cycles;
        d["transfer_cycles_per_bank"] = e.transfer_cycles_per_bank;
        d["fill_latency"] = e.fill_latency;
        d["total_cycles"] = e.total_cycles;
        d["seconds"] = e.seconds;
        d["gflops"] = e.gflops;
        d["energy_joules"] = e.energy_joules;
        d["watts"] = e.watts;
        d["gflops_per_watt"] = e.gflops_per_watt;
        return d;
      },
      py::arg("m"), py::arg("k"), py::arg("n"), py::arg("preset") = "alveo-like", ENGINE_ARGS,
      "Analytic cycle and energy estimate for one GEMM on a built-in device preset.");

  m.def("presets", [] {
    std::vector<std::string> names;
    for (const auto& p : builtin_presets()) names.push_back(p.name);
    return names;
  });

  py::class_<Network>(m, "Network")
      .def(py::init<const std::string&, const std::string&>(), py::arg("cfg"), py::arg("weights"))
      .def_property_readonly("input_shape", &Network::input_shape)
      .def_property_readonly("output_shape", &Network::output_shape)
      .def_property_readonly("layers", &Network::layers)
      .def(
          "forward",
          [](const Network& self, const FloatArray& x, std::size_t tm, std::size_t tk, std::size_t tn,
             std::size_t banks, std::size_t bus, std::size_t depth, std::size_t threads) {
            return self.forward(x, make_config(tm, tk, tn, banks, bus, depth, threads));
          },
          py::arg("x"), ENGINE_ARGS, "Runs the network on one (C, H, W) float32 input.");
}
