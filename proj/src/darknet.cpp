#include "streamgemm/darknet.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>

#include "byte_io.hpp"

namespace streamgemm {

std::string to_string(const Shape3& s) {
  return "(" + std::to_string(s.c) + "," + std::to_string(s.h) + "," + std::to_string(s.w) + ")";
}

std::string_view to_string(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::Convolutional: return "convolutional";
    case LayerKind::Deconvolutional: return "deconvolutional";
    case LayerKind::Maxpool: return "maxpool";
    case LayerKind::Connected: return "connected";
    case LayerKind::Softmax: return "softmax";
    case LayerKind::Avgpool: return "avgpool";
  }
  return "?";
}

std::size_t LayerSpec::weight_count() const noexcept {
  switch (kind) {
    case LayerKind::Convolutional:
    case LayerKind::Deconvolutional: return filters * in_dims.c * size * size;
    case LayerKind::Connected: return filters * in_dims.count();
    default: return 0;
  }
}

std::size_t LayerSpec::bias_count() const noexcept { return has_parameters() ? filters : 0; }

namespace {

struct Option {
  std::string value;
  std::size_t line = 0;
};

struct Section {
  std::string name;
  std::size_t line = 0;
  std::map<std::string, Option> options;
};

std::string strip(std::string_view s) {
  // Darknet drops every whitespace character inside a line, not only the ends.
  std::string out;
  out.reserve(s.size());
  for (char ch : s)
    if (ch != ' ' && ch != '\t' && ch != '\r' && ch != '\n' && ch != '\v' && ch != '\f') out.push_back(ch);
  return out;
}

std::vector<Section> split_sections(std::string_view text) {
  std::vector<Section> sections;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string line = strip(text.substr(pos, end - pos));
    ++line_no;
    pos = end + 1;

    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line[0] == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw Error(ErrorCode::InvalidValue, "line " + std::to_string(line_no) + ": malformed section header '" +
                                                 line + "'");
      sections.push_back({line.substr(1, line.size() - 2), line_no, {}});
      continue;
    }
    if (sections.empty())
      throw Error(ErrorCode::MissingNetHeader, "line " + std::to_string(line_no) + ": option before any section");
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      throw Error(ErrorCode::InvalidValue, "line " + std::to_string(line_no) + ": expected key=value, got '" +
                                               line + "'");
    sections.back().options[line.substr(0, eq)] = {line.substr(eq + 1), line_no};
  }
  return sections;
}

class SectionReader {
public:
  SectionReader(const Section& s, std::vector<std::string>& warnings) : s_(s), warnings_(warnings) {}

  bool has(const std::string& key) const { return s_.options.contains(key); }

  long long integer(const std::string& key, long long fallback) {
    const auto it = s_.options.find(key);
    used_.insert(key);
    if (it == s_.options.end()) return fallback;
    return parse(key, it->second);
  }

  long long required(const std::string& key) {
    if (!has(key))
      throw Error(ErrorCode::MissingRequiredKey,
                  "[" + s_.name + "] at line " + std::to_string(s_.line) + " needs '" + key + "'");
    return integer(key, 0);
  }

  std::size_t positive(const std::string& key, long long fallback) { return checked(key, integer(key, fallback), 1); }
  std::size_t non_negative(const std::string& key, long long fallback) {
    return checked(key, integer(key, fallback), 0);
  }
  std::size_t required_positive(const std::string& key) { return checked(key, required(key), 1); }

  std::string text(const std::string& key, const std::string& fallback) {
    used_.insert(key);
    const auto it = s_.options.find(key);
    return it == s_.options.end() ? fallback : it->second.value;
  }

  // Keys that are meaningful for training only; accepted silently.
  void ignore(std::initializer_list<const char*> keys) {
    for (const char* k : keys) used_.insert(k);
  }

  void warn_unused() {
    for (const auto& [key, opt] : s_.options)
      if (!used_.contains(key))
        warnings_.push_back("line " + std::to_string(opt.line) + ": unknown key '" + key + "' in [" + s_.name +
                            "] ignored");
  }

private:
  long long parse(const std::string& key, const Option& opt) const {
    long long v = 0;
    const char* first = opt.value.data();
    const char* last = first + opt.value.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
      throw Error(ErrorCode::InvalidValue,
                  "line " + std::to_string(opt.line) + ": '" + key + "' expects an integer, got '" + opt.value + "'");
    return v;
  }

  std::size_t checked(const std::string& key, long long v, long long min) const {
    if (v < min) {
      const auto it = s_.options.find(key);
      const std::size_t line = it == s_.options.end() ? s_.line : it->second.line;
      throw Error(ErrorCode::InvalidValue,
                  "line " + std::to_string(line) + ": '" + key + "' must be >= " + std::to_string(min));
    }
    return static_cast<std::size_t>(v);
  }

  const Section& s_;
  std::vector<std::string>& warnings_;
  std::set<std::string> used_;
};

LayerKind layer_kind(const Section& s) {
  static const std::map<std::string, LayerKind, std::less<>> kinds{
      {"convolutional", LayerKind::Convolutional}, {"conv", LayerKind::Convolutional},
      {"deconvolutional", LayerKind::Deconvolutional}, {"deconv", LayerKind::Deconvolutional},
      {"maxpool", LayerKind::Maxpool}, {"max", LayerKind::Maxpool},
      {"connected", LayerKind::Connected}, {"softmax", LayerKind::Softmax}, {"soft", LayerKind::Softmax},
      {"avgpool", LayerKind::Avgpool}, {"avg", LayerKind::Avgpool},
  };
  const auto it = kinds.find(s.name);
  if (it == kinds.end())
    throw Error(ErrorCode::UnknownSection, "line " + std::to_string(s.line) + ": section [" + s.name +
                                               "] is not supported");
  return it->second;
}

[[noreturn]] void non_integral(std::size_t index, const LayerSpec& l, const char* why) {
  throw Error(ErrorCode::NonIntegralOutputDim, "layer " + std::to_string(index) + " ([" +
                                                   std::string(to_string(l.kind)) + "] at line " +
                                                   std::to_string(l.line) + ") " + why + " for input " +
                                                   to_string(l.in_dims));
}

void read_conv_like(SectionReader& r, LayerSpec& l) {
  l.filters = r.required_positive("filters");
  l.size = r.required_positive("size");
  l.stride = r.positive("stride", 1);
  const bool same = r.integer("pad", 0) != 0;
  l.pad = same ? l.size / 2 : r.non_negative("padding", 0);
  if (same) r.ignore({"padding"});
  l.activation = parse_activation(r.text("activation", "logistic"));
  l.batch_normalize = r.integer("batch_normalize", 0) != 0;
  for (const char* key : {"groups", "dilation"})
    if (r.positive(key, 1) != 1)
      throw Error(ErrorCode::InvalidValue, std::string("'") + key + "' other than 1 is not supported");
}

LayerSpec read_layer(const Section& s, std::size_t index, const Shape3& in, std::vector<std::string>& warnings) {
  SectionReader r(s, warnings);
  LayerSpec l;
  l.kind = layer_kind(s);
  l.in_dims = in;
  l.line = s.line;

  switch (l.kind) {
    case LayerKind::Convolutional: {
      read_conv_like(r, l);
      const std::size_t oh = conv_out_extent(in.h, l.size, l.stride, l.pad);
      const std::size_t ow = conv_out_extent(in.w, l.size, l.stride, l.pad);
      if (oh == 0 || ow == 0) non_integral(index, l, "(in + 2*pad - size)/stride is not a whole number >= 0");
      l.out_dims = {l.filters, oh, ow};
      break;
    }
    case LayerKind::Deconvolutional: {
      read_conv_like(r, l);
      const auto extent = [&](std::size_t v) -> long long {
        return static_cast<long long>((v - 1) * l.stride + l.size) - 2 * static_cast<long long>(l.pad);
      };
      const long long oh = extent(in.h), ow = extent(in.w);
      if (oh < 1 || ow < 1) non_integral(index, l, "(in - 1)*stride + size - 2*pad < 1");
      l.out_dims = {l.filters, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)};
      break;
    }
    case LayerKind::Maxpool: {
      l.stride = r.positive("stride", 1);
      l.size = r.positive("size", static_cast<long long>(l.stride));
      l.pad = r.non_negative("padding", static_cast<long long>(l.size) - 1);
      l.activation = Activation::Linear;
      const std::size_t oh = maxpool_out_extent(in.h, l.size, l.stride, l.pad);
      const std::size_t ow = maxpool_out_extent(in.w, l.size, l.stride, l.pad);
      if (oh == 0 || ow == 0) non_integral(index, l, "pool window exceeds padded input");
      l.out_dims = {in.c, oh, ow};
      break;
    }
    case LayerKind::Connected:
      l.filters = r.required_positive("output");
      l.activation = parse_activation(r.text("activation", "logistic"));
      l.batch_normalize = r.integer("batch_normalize", 0) != 0;
      l.out_dims = {l.filters, 1, 1};
      break;
    case LayerKind::Softmax:
      if (r.positive("groups", 1) != 1) throw Error(ErrorCode::InvalidValue, "softmax groups must be 1");
      l.activation = Activation::Linear;
      l.out_dims = in;
      break;
    case LayerKind::Avgpool:
      l.activation = Activation::Linear;
      l.out_dims = {in.c, 1, 1};
      break;
  }
  r.warn_unused();
  return l;
}

}  // namespace

NetworkGraph parse_cfg(std::string_view source_text) {
  const auto sections = split_sections(source_text);
  if (sections.empty()) throw Error(ErrorCode::EmptyConfig, "no sections in configuration");

  const Section& head = sections.front();
  if (head.name != "net" && head.name != "network")
    throw Error(ErrorCode::MissingNetHeader,
                "line " + std::to_string(head.line) + ": first section is [" + head.name + "], expected [net]");

  NetworkGraph g;
  SectionReader net(head, g.warnings);
  g.input_dims = {net.required_positive("channels"), net.required_positive("height"),
                  net.required_positive("width")};
  net.ignore({"batch", "subdivisions", "momentum", "decay", "learning_rate", "burn_in", "max_batches", "policy",
              "steps", "scales", "step", "scale", "power", "gamma", "angle", "saturation", "exposure", "hue",
              "aspect", "jitter", "max_crop", "min_crop", "mosaic", "flip", "inputs", "time_steps",
              "adam", "B1", "B2", "eps", "seed"});
  net.warn_unused();

  if (sections.size() == 1) throw Error(ErrorCode::EmptyConfig, "configuration declares no layers");

  Shape3 dims = g.input_dims;
  for (std::size_t i = 1; i < sections.size(); ++i) {
    g.layers.push_back(read_layer(sections[i], i - 1, dims, g.warnings));
    dims = g.layers.back().out_dims;
  }
  return g;
}

NetworkGraph load_cfg(const std::string& path) { return parse_cfg(detail::read_text_file(path)); }

std::pair<std::vector<float>, std::vector<float>> fold_batchnorm(std::span<const float> weights,
                                                                 std::span<const float> biases, const BatchNorm& bn,
                                                                 float eps, std::size_t groups) {
  const std::size_t filters = biases.size();
  if (bn.gamma.size() != filters || bn.beta.size() != filters || bn.mean.size() != filters ||
      bn.var.size() != filters)
    throw Error(ErrorCode::DimMismatch, "batchnorm vectors must all have length " + std::to_string(filters));
  if (groups == 0 || filters == 0 || weights.size() % (groups * filters) != 0)
    throw Error(ErrorCode::DimMismatch, "weights are not divisible into filters");
  for (std::size_t f = 0; f < filters; ++f)
    if (!(bn.var[f] >= 0.0f))
      throw Error(ErrorCode::NegativeVariance, "variance of filter " + std::to_string(f) + " is negative");

  std::vector<float> scale(filters);
  for (std::size_t f = 0; f < filters; ++f) scale[f] = bn.gamma[f] / std::sqrt(bn.var[f] + eps);

  const std::size_t per = weights.size() / (groups * filters);
  std::vector<float> w(weights.begin(), weights.end());
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t f = 0; f < filters; ++f)
      for (std::size_t i = 0; i < per; ++i) w[(g * filters + f) * per + i] *= scale[f];

  std::vector<float> b(filters);
  for (std::size_t f = 0; f < filters; ++f) b[f] = bn.beta[f] + (biases[f] - bn.mean[f]) * scale[f];
  return {std::move(w), std::move(b)};
}

std::size_t expected_weights_size(const NetworkGraph& graph, const WeightsHeader& header) {
  std::size_t floats = 0;
  for (const auto& l : graph.layers) {
    floats += l.bias_count() + l.weight_count();
    if (l.batch_normalize && l.has_parameters()) floats += 3 * l.filters;
  }
  return header.byte_size() + floats * 4;
}

namespace {

class Cursor {
public:
  Cursor(std::span<const std::uint8_t> bytes, std::size_t expected, std::size_t start)
      : bytes_(bytes), expected_(expected), pos_(start) {}

  std::vector<float> floats(std::size_t n) {
    need(n * 4);
    std::vector<float> out(n);
    detail::get_f32s(bytes_.data() + pos_, out);
    pos_ += n * 4;
    return out;
  }

  std::size_t pos() const noexcept { return pos_; }

private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size())
      throw Error(ErrorCode::TruncatedFile, "weights: expected " + std::to_string(expected_) + " bytes, got " +
                                                std::to_string(bytes_.size()));
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t expected_;
  std::size_t pos_;
};

}  // namespace

WeightedNetwork load_weights(std::span<const std::uint8_t> bytes, const NetworkGraph& graph) {
  if (bytes.size() < 12)
    throw Error(ErrorCode::TruncatedFile, "weights: expected at least 12 header bytes, got " +
                                              std::to_string(bytes.size()));
  WeightedNetwork net;
  auto& h = net.header;
  h.major = static_cast<std::int32_t>(detail::get_u32(bytes.data()));
  h.minor = static_cast<std::int32_t>(detail::get_u32(bytes.data() + 4));
  h.revision = static_cast<std::int32_t>(detail::get_u32(bytes.data() + 8));
  if (h.major < 0 || h.minor < 0 || h.revision < 0 || h.major > 1000 || h.minor > 1000)
    throw Error(ErrorCode::BadHeader, "weights: unsupported version " + std::to_string(h.major) + "." +
                                          std::to_string(h.minor) + "." + std::to_string(h.revision));

  const std::size_t expected = expected_weights_size(graph, h);
  if (bytes.size() < h.byte_size())
    throw Error(ErrorCode::TruncatedFile,
                "weights: expected " + std::to_string(expected) + " bytes, got " + std::to_string(bytes.size()));
  h.seen = h.wide_seen() ? detail::get_u64(bytes.data() + 12) : detail::get_u32(bytes.data() + 12);

  Cursor cur(bytes, expected, h.byte_size());

  net.graph = graph;
  net.layers.resize(graph.layers.size());
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    auto& spec = net.graph.layers[i];
    if (!spec.has_parameters()) continue;
    auto& lw = net.layers[i];
    const std::size_t nf = spec.filters;

    // Darknet stores conv/deconv as biases, [bn], weights and connected as
    // biases, weights, [bn]. With batchnorm the stored biases are its beta.
    std::vector<float> biases = cur.floats(nf);
    std::vector<float> weights;
    BatchNorm bn;
    if (spec.kind == LayerKind::Connected) weights = cur.floats(spec.weight_count());
    if (spec.batch_normalize) {
      bn.gamma = cur.floats(nf);
      bn.mean = cur.floats(nf);
      bn.var = cur.floats(nf);
    }
    if (spec.kind != LayerKind::Connected) weights = cur.floats(spec.weight_count());

    if (spec.batch_normalize) {
      bn.beta = std::move(biases);
      const std::vector<float> zero(nf, 0.0f);
      const std::size_t groups = spec.kind == LayerKind::Deconvolutional ? spec.in_dims.c : 1;
      std::tie(lw.weights, lw.biases) = fold_batchnorm(weights, zero, bn, kBatchNormEps, groups);
      spec.batch_normalize = false;
    } else {
      lw.weights = std::move(weights);
      lw.biases = std::move(biases);
    }
  }

  if (cur.pos() != bytes.size())
    throw Error(ErrorCode::TrailingBytes, std::to_string(bytes.size() - cur.pos()) + " bytes after last layer");
  return net;
}

WeightedNetwork load_weights_file(const std::string& path, const NetworkGraph& graph) {
  try {
    return load_weights(detail::read_file(path), graph);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io) throw;
    throw Error(e.code(), "'" + path + "': " + e.what());
  }
}

std::vector<std::uint8_t> save_weights(const WeightedNetwork& net) {
  if (net.layers.size() != net.graph.layers.size())
    throw Error(ErrorCode::DimMismatch, "weights do not cover every layer");
  std::vector<std::uint8_t> out;
  const auto& h = net.header;
  detail::put_u32(out, static_cast<std::uint32_t>(h.major));
  detail::put_u32(out, static_cast<std::uint32_t>(h.minor));
  detail::put_u32(out, static_cast<std::uint32_t>(h.revision));
  if (h.wide_seen())
    detail::put_u64(out, h.seen);
  else
    detail::put_u32(out, static_cast<std::uint32_t>(h.seen));

  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& spec = net.graph.layers[i];
    if (!spec.has_parameters()) continue;
    if (spec.batch_normalize)
      throw Error(ErrorCode::InvalidValue, "layer " + std::to_string(i) + " still carries unfolded batchnorm");
    const auto& lw = net.layers[i];
    if (lw.biases.size() != spec.bias_count() || lw.weights.size() != spec.weight_count())
      throw Error(ErrorCode::DimMismatch, "layer " + std::to_string(i) + " parameter counts do not match its spec");
    detail::put_f32s(out, lw.biases);
    detail::put_f32s(out, lw.weights);
  }
  return out;
}

}  // namespace streamgemm
