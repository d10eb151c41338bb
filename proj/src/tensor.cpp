#include "streamgemm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "byte_io.hpp"

namespace streamgemm {

std::string to_string(const Dims4& d) {
  return "(" + std::to_string(d.n) + "," + std::to_string(d.c) + "," + std::to_string(d.h) + "," +
         std::to_string(d.w) + ")";
}

Tensor::Tensor(Dims4 dims) : dims_(dims), data_(dims.count(), 0.0f) {}

Tensor::Tensor(Dims4 dims, std::vector<float> data) : dims_(dims), data_(std::move(data)) {
  if (data_.size() != dims_.count())
    throw Error(ErrorCode::DimMismatch, "tensor " + to_string(dims_) + " needs " + std::to_string(dims_.count()) +
                                            " values, got " + std::to_string(data_.size()));
}

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_)
    throw Error(ErrorCode::DimMismatch, "matrix " + std::to_string(rows) + "x" + std::to_string(cols) + " needs " +
                                            std::to_string(rows * cols) + " values, got " +
                                            std::to_string(data_.size()));
}

bool bitwise_equal(std::span<const float> a, std::span<const float> b) noexcept {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size_bytes()) == 0);
}

std::size_t conv_out_extent(std::size_t in, std::size_t size, std::size_t stride, std::size_t pad) noexcept {
  if (stride == 0 || size == 0) return 0;
  const std::size_t padded = in + 2 * pad;
  if (padded < size || (padded - size) % stride != 0) return 0;
  return (padded - size) / stride + 1;
}

namespace {

void require_single(const Tensor& x, const char* op) {
  if (x.dims().n != 1)
    throw Error(ErrorCode::DimMismatch, std::string(op) + " expects batch 1, got " + to_string(x.dims()));
}

}  // namespace

Matrix im2col(const Tensor& x, std::size_t size, std::size_t stride, std::size_t pad) {
  require_single(x, "im2col");
  const auto [n, c, h, w] = x.dims();
  const std::size_t out_h = conv_out_extent(h, size, stride, pad);
  const std::size_t out_w = conv_out_extent(w, size, stride, pad);
  if (out_h == 0 || out_w == 0)
    throw Error(ErrorCode::DimMismatch, "im2col window " + std::to_string(size) + "/" + std::to_string(stride) +
                                            "/" + std::to_string(pad) + " does not tile " + to_string(x.dims()));

  Matrix m(c * size * size, out_h * out_w);
  const auto src = x.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t ky = 0; ky < size; ++ky) {
      for (std::size_t kx = 0; kx < size; ++kx) {
        const std::size_t r = (ch * size + ky) * size + kx;
        float* dst = m.data().data() + r * m.cols();
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          // signed offsets: window may start inside the padding
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(h) &&
                                ix < static_cast<std::ptrdiff_t>(w);
            dst[oy * out_w + ox] = inside ? src[(ch * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)]
                                          : 0.0f;
          }
        }
      }
    }
  }
  return m;
}

Tensor col2im(const Matrix& m, std::size_t c, std::size_t h, std::size_t w, std::size_t size, std::size_t stride,
              std::size_t pad) {
  const std::size_t out_h = conv_out_extent(h, size, stride, pad);
  const std::size_t out_w = conv_out_extent(w, size, stride, pad);
  if (out_h == 0 || out_w == 0 || c == 0)
    throw Error(ErrorCode::DimMismatch, "col2im geometry does not tile the target image");
  if (m.rows() != c * size * size || m.cols() != out_h * out_w)
    throw Error(ErrorCode::DimMismatch, "col2im expects " + std::to_string(c * size * size) + "x" +
                                            std::to_string(out_h * out_w) + " columns matrix, got " +
                                            std::to_string(m.rows()) + "x" + std::to_string(m.cols()));

  Tensor t(Dims4{1, c, h, w});
  auto dst = t.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t ky = 0; ky < size; ++ky) {
      for (std::size_t kx = 0; kx < size; ++kx) {
        const std::size_t r = (ch * size + ky) * size + kx;
        const float* src = m.data().data() + r * m.cols();
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            dst[(ch * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] += src[oy * out_w + ox];
          }
        }
      }
    }
  }
  return t;
}

Activation parse_activation(const std::string& name) {
  if (name == "linear") return Activation::Linear;
  if (name == "relu") return Activation::Relu;
  if (name == "leaky") return Activation::Leaky;
  if (name == "logistic") return Activation::Logistic;
  throw Error(ErrorCode::InvalidValue, "unsupported activation '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Linear: return "linear";
    case Activation::Relu: return "relu";
    case Activation::Leaky: return "leaky";
    case Activation::Logistic: return "logistic";
  }
  return "linear";
}

float activate(float v, Activation kind) noexcept {
  switch (kind) {
    case Activation::Linear: return v;
    case Activation::Relu: return v > 0.0f ? v : 0.0f;
    case Activation::Leaky: return v > 0.0f ? v : kLeakySlope * v;
    case Activation::Logistic: return 1.0f / (1.0f + std::exp(-v));
  }
  return v;
}

void activate_inplace(std::span<float> x, Activation kind) noexcept {
  if (kind == Activation::Linear) return;
  for (float& v : x) v = activate(v, kind);
}

Tensor activate(Tensor x, Activation kind) {
  activate_inplace(x.data(), kind);
  return x;
}

std::size_t maxpool_out_extent(std::size_t in, std::size_t size, std::size_t stride, std::size_t pad) noexcept {
  if (stride == 0 || size == 0 || in + pad < size) return 0;
  return (in + pad - size) / stride + 1;
}

Tensor maxpool(const Tensor& x, std::size_t size, std::size_t stride, std::size_t pad) {
  require_single(x, "maxpool");
  const auto [n, c, h, w] = x.dims();
  const std::size_t out_h = maxpool_out_extent(h, size, stride, pad);
  const std::size_t out_w = maxpool_out_extent(w, size, stride, pad);
  if (out_h == 0 || out_w == 0) throw Error(ErrorCode::DimMismatch, "maxpool window larger than padded input");

  const auto offset = -static_cast<std::ptrdiff_t>(pad / 2);
  Tensor y(Dims4{1, c, out_h, out_w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        float best = -std::numeric_limits<float>::infinity();
        for (std::size_t ky = 0; ky < size; ++ky) {
          const auto iy = offset + static_cast<std::ptrdiff_t>(oy * stride + ky);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < size; ++kx) {
            const auto ix = offset + static_cast<std::ptrdiff_t>(ox * stride + kx);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            best = std::max(best, x.at(0, ch, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)));
          }
        }
        y.at(0, ch, oy, ox) = best;
      }
    }
  }
  return y;
}

Tensor avgpool(const Tensor& x) {
  require_single(x, "avgpool");
  const auto [n, c, h, w] = x.dims();
  Tensor y(Dims4{1, c, 1, 1});
  const std::size_t plane = h * w;
  for (std::size_t ch = 0; ch < c; ++ch) {
    float sum = 0.0f;
    for (std::size_t i = 0; i < plane; ++i) sum += x.data()[ch * plane + i];
    y.data()[ch] = sum / static_cast<float>(plane);
  }
  return y;
}

Tensor softmax(const Tensor& x) {
  const auto& d = x.dims();
  if (d.n != 1 || d.h != 1 || d.w != 1)
    throw Error(ErrorCode::DimMismatch, "softmax expects (1,c,1,1), got " + to_string(d));
  Tensor y(d);
  const auto in = x.data();
  auto out = y.data();
  const float peak = *std::max_element(in.begin(), in.end());
  std::vector<double> e(in.size());
  double total = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    e[i] = std::exp(static_cast<double>(in[i]) - static_cast<double>(peak));
    total += e[i];
  }
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = static_cast<float>(e[i] / total);
  return y;
}

std::vector<std::uint8_t> encode_raw_tensor(const Tensor& t) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(16 + t.size() * 4);
  const auto& d = t.dims();
  for (std::size_t v : {d.n, d.c, d.h, d.w}) detail::put_u32(bytes, static_cast<std::uint32_t>(v));
  detail::put_f32s(bytes, t.data());
  return bytes;
}

Tensor decode_raw_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) throw Error(ErrorCode::TruncatedFile, "raw tensor header needs 16 bytes");
  const Dims4 d{detail::get_u32(bytes.data()), detail::get_u32(bytes.data() + 4), detail::get_u32(bytes.data() + 8),
                detail::get_u32(bytes.data() + 12)};
  if (d.n == 0 || d.c == 0 || d.h == 0 || d.w == 0)
    throw Error(ErrorCode::BadHeader, "raw tensor dims must be positive, got " + to_string(d));
  const std::size_t expected = 16 + d.count() * 4;
  if (bytes.size() < expected)
    throw Error(ErrorCode::TruncatedFile,
                "raw tensor expected " + std::to_string(expected) + " bytes, got " + std::to_string(bytes.size()));
  if (bytes.size() > expected)
    throw Error(ErrorCode::TrailingBytes, std::to_string(bytes.size() - expected) + " bytes after tensor payload");
  std::vector<float> data(d.count());
  detail::get_f32s(bytes.data() + 16, data);
  return Tensor(d, std::move(data));
}

Tensor read_raw_tensor(const std::string& path) { return decode_raw_tensor(detail::read_file(path)); }

void write_raw_tensor(const std::string& path, const Tensor& t) { detail::write_file(path, encode_raw_tensor(t)); }

}  // namespace streamgemm
