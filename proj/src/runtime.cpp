#include "streamgemm/runtime.hpp"

namespace streamgemm {

ExecutionPlan lower(const WeightedNetwork& network, const EngineConfig& config) {
  config.validate();
  const auto& layers = network.graph.layers;
  if (network.layers.size() != layers.size())
    throw Error(ErrorCode::DimMismatch, "network has " + std::to_string(layers.size()) + " layers but " +
                                            std::to_string(network.layers.size()) + " weight sets");
  ExecutionPlan plan;
  plan.config = config;
  Shape3 expected = network.graph.input_dims;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.in_dims != expected)
      throw Error(ErrorCode::DimMismatch, "layer " + std::to_string(i) + " expects " + to_string(l.in_dims) +
                                              " but receives " + to_string(expected));
    if (l.batch_normalize)
      throw Error(ErrorCode::UnsupportedLayer, "layer " + std::to_string(i) + " has unfolded batchnorm");
    const auto& w = network.layers[i];
    if (w.weights.size() != l.weight_count() || w.biases.size() != l.bias_count())
      throw Error(ErrorCode::DimMismatch, "layer " + std::to_string(i) + " parameter count mismatch");

    PlanStep step{i, Lowering::Direct, std::nullopt};
    switch (l.kind) {
      case LayerKind::Convolutional:
        step.lowering = Lowering::Im2colGemm;
        step.gemm = GemmShape{l.filters, l.in_dims.c * l.size * l.size, l.out_dims.h * l.out_dims.w};
        break;
      case LayerKind::Connected:
        step.lowering = Lowering::Im2colGemm;
        step.gemm = GemmShape{l.filters, l.in_dims.count(), 1};
        break;
      case LayerKind::Deconvolutional:
        step.lowering = Lowering::GemmCol2im;
        step.gemm = GemmShape{l.filters * l.size * l.size, l.in_dims.c, l.in_dims.h * l.in_dims.w};
        break;
      case LayerKind::Softmax:
        if (l.in_dims.h != 1 || l.in_dims.w != 1)
          throw Error(ErrorCode::DimMismatch,
                      "softmax layer " + std::to_string(i) + " needs a (c,1,1) input, got " + to_string(l.in_dims));
        break;
      case LayerKind::Maxpool:
      case LayerKind::Avgpool:
        break;
      default:
        throw Error(ErrorCode::UnsupportedLayer, "layer " + std::to_string(i));
    }
    plan.steps.push_back(step);
    expected = l.out_dims;
  }
  return plan;
}

namespace {

void add_bias_activate(std::span<float> out, std::span<const float> bias, std::size_t plane, Activation act) {
  for (std::size_t f = 0; f < bias.size(); ++f) {
    auto chan = out.subspan(f * plane, plane);
    for (float& v : chan) v += bias[f];
    activate_inplace(chan, act);
  }
}

Matrix transpose(std::span<const float> src, std::size_t rows, std::size_t cols) {
  Matrix t(cols, rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t(c, r) = src[r * cols + c];
  return t;
}

}  // namespace

Tensor forward(const ExecutionPlan& plan, const WeightedNetwork& network, const Tensor& input) {
  const auto& graph = network.graph;
  if (input.dims() != graph.input_dims.as_dims())
    throw Error(ErrorCode::DimMismatch, "input is " + to_string(input.dims()) + ", network expects " +
                                            to_string(graph.input_dims.as_dims()));
  if (plan.steps.size() != graph.layers.size())
    throw Error(ErrorCode::DimMismatch, "plan does not cover every layer");

  Tensor x = input;
  for (const auto& step : plan.steps) {
    const auto& l = graph.layers[step.layer];
    const auto& w = network.layers[step.layer];
    switch (l.kind) {
      case LayerKind::Convolutional: {
        const auto& g = *step.gemm;
        Matrix weights(g.m, g.k, w.weights);
        Matrix y = gemm_streamed(weights, im2col(x, l.size, l.stride, l.pad), plan.config);
        Tensor out(l.out_dims.as_dims(), {y.data().begin(), y.data().end()});
        add_bias_activate(out.data(), w.biases, g.n, l.activation);
        x = std::move(out);
        break;
      }
      case LayerKind::Connected: {
        const auto& g = *step.gemm;
        Matrix weights(g.m, g.k, w.weights);
        Matrix column(g.k, 1, {x.data().begin(), x.data().end()});
        Matrix y = gemm_streamed(weights, column, plan.config);
        Tensor out(l.out_dims.as_dims(), {y.data().begin(), y.data().end()});
        add_bias_activate(out.data(), w.biases, 1, l.activation);
        x = std::move(out);
        break;
      }
      case LayerKind::Deconvolutional: {
        const auto& g = *step.gemm;
        // stored as (in_c, filters*size*size); the GEMM wants its transpose
        Matrix weights_t = transpose(w.weights, g.k, g.m);
        Matrix image(g.k, g.n, {x.data().begin(), x.data().end()});
        Matrix cols = gemm_streamed(weights_t, image, plan.config);
        Tensor out = col2im(cols, l.out_dims.c, l.out_dims.h, l.out_dims.w, l.size, l.stride, l.pad);
        add_bias_activate(out.data(), w.biases, l.out_dims.h * l.out_dims.w, l.activation);
        x = std::move(out);
        break;
      }
      case LayerKind::Maxpool:
        x = maxpool(x, l.size, l.stride, l.pad);
        break;
      case LayerKind::Avgpool:
        x = avgpool(x);
        break;
      case LayerKind::Softmax:
        x = softmax(x);
        break;
    }
  }
  return x;
}

Tensor forward(const WeightedNetwork& network, const Tensor& input, const EngineConfig& config) {
  return forward(lower(network, config), network, input);
}

}  // namespace streamgemm
