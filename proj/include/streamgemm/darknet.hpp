#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "streamgemm/tensor.hpp"

namespace streamgemm {

struct Shape3 {
  std::size_t c = 0, h = 0, w = 0;

  std::size_t count() const noexcept { return c * h * w; }
  Dims4 as_dims() const noexcept { return {1, c, h, w}; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

std::string to_string(const Shape3& s);

enum class LayerKind { Convolutional, Deconvolutional, Maxpool, Connected, Softmax, Avgpool };

std::string_view to_string(LayerKind kind) noexcept;

struct LayerSpec {
  LayerKind kind = LayerKind::Convolutional;
  std::size_t filters = 0;  // conv/deconv filters, connected outputs
  std::size_t size = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;      // effective padding in pixels
  Activation activation = Activation::Linear;
  bool batch_normalize = false;
  Shape3 in_dims{};
  Shape3 out_dims{};
  std::size_t line = 0;     // line of the section header in the source

  /// Parameter counts as laid out in a weights file.
  std::size_t weight_count() const noexcept;
  std::size_t bias_count() const noexcept;
  bool has_parameters() const noexcept {
    return kind == LayerKind::Convolutional || kind == LayerKind::Deconvolutional || kind == LayerKind::Connected;
  }
};

struct NetworkGraph {
  Shape3 input_dims{};
  std::vector<LayerSpec> layers;
  std::vector<std::string> warnings;  // e.g. unknown keys that were skipped

  const Shape3& output_dims() const { return layers.back().out_dims; }
};

/// Parses Darknet `.cfg` text. Sections are `[name]` lines, options are
/// `key=value`, and lines starting with `#` or `;` are comments. The first
/// section must be `[net]` (or `[network]`). Supported layer sections are
/// convolutional, deconvolutional, maxpool, connected, softmax and avgpool;
/// anything else throws UnknownSection.
///
/// `pad=1` means "same" padding (size/2) and `padding=N` sets it explicitly,
/// as in Darknet. For maxpool `padding` defaults to size-1.
NetworkGraph parse_cfg(std::string_view source_text);
NetworkGraph load_cfg(const std::string& path);

constexpr float kBatchNormEps = 1e-6f;

struct BatchNorm {
  std::vector<float> gamma, beta, mean, var;
};

/// Folds inference batchnorm into the preceding linear map:
///   w'[f] = w[f] * gamma[f] / sqrt(var[f] + eps)
///   b'[f] = beta[f] + (b[f] - mean[f]) * gamma[f] / sqrt(var[f] + eps)
/// `weights` is viewed as (groups, filters, per_filter); conv and connected
/// layers use groups = 1, deconv weights (in_c, filters, k, k) use groups = in_c.
std::pair<std::vector<float>, std::vector<float>> fold_batchnorm(std::span<const float> weights,
                                                                 std::span<const float> biases, const BatchNorm& bn,
                                                                 float eps = kBatchNormEps, std::size_t groups = 1);

struct LayerWeights {
  // conv: (filters, in_c, size, size); deconv: (in_c, filters, size, size);
  // connected: (outputs, inputs). Empty for parameter-free layers.
  std::vector<float> weights;
  std::vector<float> biases;
};

struct WeightsHeader {
  std::int32_t major = 0, minor = 2, revision = 0;
  std::uint64_t seen = 0;

  bool wide_seen() const noexcept { return major * 10 + minor >= 2; }
  std::size_t byte_size() const noexcept { return wide_seen() ? 20 : 16; }
};

/// A graph bound to its parameters. Batchnorm is always folded on load, so
/// every layer in `graph` has batch_normalize == false afterwards.
struct WeightedNetwork {
  NetworkGraph graph;
  std::vector<LayerWeights> layers;  // parallel to graph.layers
  WeightsHeader header{};
};

/// Expected `.weights` size in bytes for `graph` given a header layout.
std::size_t expected_weights_size(const NetworkGraph& graph, const WeightsHeader& header);

WeightedNetwork load_weights(std::span<const std::uint8_t> bytes, const NetworkGraph& graph);
WeightedNetwork load_weights_file(const std::string& path, const NetworkGraph& graph);

/// Serializes folded parameters in Darknet order; loading the result against
/// `net.graph` reproduces the parameters bit for bit.
std::vector<std::uint8_t> save_weights(const WeightedNetwork& net);

}  // namespace streamgemm
