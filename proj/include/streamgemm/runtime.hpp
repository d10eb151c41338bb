#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "streamgemm/darknet.hpp"
#include "streamgemm/engine.hpp"

namespace streamgemm {

enum class Lowering {
  Im2colGemm,  // convolutional, connected
  GemmCol2im,  // deconvolutional
  Direct,      // pooling, softmax
};

struct PlanStep {
  std::size_t layer = 0;
  Lowering lowering = Lowering::Direct;
  std::optional<GemmShape> gemm;
};

struct ExecutionPlan {
  std::vector<PlanStep> steps;  // one per layer, in order
  EngineConfig config;
};

/// conv:   M = filters, K = in_c * size^2, N = out_h * out_w
/// fc:     M = outputs, K = inputs, N = 1
/// deconv: M = filters * size^2, K = in_c, N = in_h * in_w, then col2im
ExecutionPlan lower(const WeightedNetwork& network, const EngineConfig& config);

/// Runs the network on a (1, c, h, w) input. Every GEMM goes through
/// gemm_streamed; biases are added per output channel before activation.
Tensor forward(const WeightedNetwork& network, const Tensor& input, const EngineConfig& config);
Tensor forward(const ExecutionPlan& plan, const WeightedNetwork& network, const Tensor& input);

}  // namespace streamgemm
