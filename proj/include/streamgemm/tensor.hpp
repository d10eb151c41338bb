#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "streamgemm/error.hpp"

namespace streamgemm {

struct Dims4 {
  std::size_t n = 1, c = 1, h = 1, w = 1;

  std::size_t count() const noexcept { return n * c * h * w; }
  friend bool operator==(const Dims4&, const Dims4&) = default;
};

std::string to_string(const Dims4& d);

// 4-D FP32 tensor, NCHW, w fastest.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(Dims4 dims);
  Tensor(Dims4 dims, std::vector<float> data);

  const Dims4& dims() const noexcept { return dims_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  float& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * dims_.c + c) * dims_.h + h) * dims_.w + w];
  }
  float at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * dims_.c + c) * dims_.h + h) * dims_.w + w];
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

private:
  Dims4 dims_{};
  std::vector<float> data_;
};

// 2-D FP32 matrix, row-major.
class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<float> data_;
};

/// Byte-level equality; distinguishes -0.0 from 0.0 and compares NaN payloads.
bool bitwise_equal(std::span<const float> a, std::span<const float> b) noexcept;

/// Output extent of a convolution window sweep along one axis, or 0 when the
/// geometry does not yield an integral extent >= 1.
std::size_t conv_out_extent(std::size_t in, std::size_t size, std::size_t stride, std::size_t pad) noexcept;

// Lowering kernels. All of them require n == 1.

/// Gathers every size x size window into a column. Rows are ordered
/// (channel, ky, kx); columns follow output positions in row-major order.
Matrix im2col(const Tensor& x, std::size_t size, std::size_t stride, std::size_t pad);

/// Scatter-add adjoint of im2col into a (1, c, h, w) tensor.
Tensor col2im(const Matrix& m, std::size_t c, std::size_t h, std::size_t w, std::size_t size,
              std::size_t stride, std::size_t pad);

enum class Activation { Linear, Relu, Leaky, Logistic };

constexpr float kLeakySlope = 0.1f;

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

float activate(float v, Activation kind) noexcept;
Tensor activate(Tensor x, Activation kind);
void activate_inplace(std::span<float> x, Activation kind) noexcept;

/// Darknet-style max pooling: `pad` is the total padding, the window origin is
/// shifted by -pad/2, out-of-range cells read as -infinity, and the output
/// extent is floor((in + pad - size) / stride) + 1.
std::size_t maxpool_out_extent(std::size_t in, std::size_t size, std::size_t stride, std::size_t pad) noexcept;
Tensor maxpool(const Tensor& x, std::size_t size, std::size_t stride, std::size_t pad);

/// Global average per channel; output is (1, c, 1, 1).
Tensor avgpool(const Tensor& x);

/// Max-subtracted softmax over the channel axis of a (1, c, 1, 1) tensor.
Tensor softmax(const Tensor& x);

// Raw tensor file: 4 x u32 little-endian (n, c, h, w) followed by FP32 LE data.
std::vector<std::uint8_t> encode_raw_tensor(const Tensor& t);
Tensor decode_raw_tensor(std::span<const std::uint8_t> bytes);
Tensor read_raw_tensor(const std::string& path);
void write_raw_tensor(const std::string& path, const Tensor& t);

}  // namespace streamgemm
