#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "streamgemm/tensor.hpp"
#include "support/oracles.hpp"

using namespace streamgemm;

namespace {

Tensor iota_tensor(std::size_t c, std::size_t h, std::size_t w) {
  std::vector<float> v(c * h * w);
  std::iota(v.begin(), v.end(), 1.0f);
  return Tensor({1, c, h, w}, v);
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("im2col with a 1x1 window is a reshape") {
  const Tensor x = iota_tensor(3, 2, 4);
  const Matrix m = im2col(x, 1, 1, 0);
  CHECK(m.rows() == 3);
  CHECK(m.cols() == 8);
  CHECK(bitwise_equal(m.data(), x.data()));
}

TEST_CASE("im2col of a single 3x3 window is one column of 1..9") {
  const Matrix m = im2col(iota_tensor(1, 3, 3), 3, 1, 0);
  REQUIRE(m.rows() == 9);
  REQUIRE(m.cols() == 1);
  for (std::size_t r = 0; r < 9; ++r) CHECK(m(r, 0) == static_cast<float>(r + 1));
}

TEST_CASE("im2col pads with zeros") {
  // 2x2 image, 3x3 window, pad 1: window 0 is centred on (0,0).
  const Matrix m = im2col(iota_tensor(1, 2, 2), 3, 1, 1);
  REQUIRE(m.rows() == 9);
  REQUIRE(m.cols() == 4);
  const std::vector<float> column0{0, 0, 0, 0, 1, 2, 0, 3, 4};
  for (std::size_t r = 0; r < 9; ++r) CHECK(m(r, 0) == column0[r]);

  // same column by enumerating the window directly
  for (std::size_t r = 0; r < 9; ++r) {
    const long y = static_cast<long>(r / 3) - 1, x = static_cast<long>(r % 3) - 1;
    const float want = (y < 0 || x < 0) ? 0.0f : static_cast<float>(y * 2 + x + 1);
    CHECK(m(r, 0) == want);
  }
}

TEST_CASE("im2col rejects geometries that do not tile") {
  CHECK(code_of([] { im2col(iota_tensor(1, 2, 2), 3, 2, 0); }) == ErrorCode::DimMismatch);
  CHECK(code_of([] { im2col(Tensor({2, 1, 3, 3}), 1, 1, 0); }) == ErrorCode::DimMismatch);
}

TEST_CASE("each input element appears once per covering window") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t size = 1 + rng() % 4, stride = 1 + rng() % 3, pad = rng() % 3;
    const std::size_t c = 1 + rng() % 3;
    std::size_t h = size + rng() % 6, w = size + rng() % 6;
    // make the extent integral
    h += (stride - (h + 2 * pad - size) % stride) % stride;
    w += (stride - (w + 2 * pad - size) % stride) % stride;
    const Tensor x = iota_tensor(c, h, w);
    const Matrix m = im2col(x, size, stride, pad);
    std::vector<std::size_t> seen(x.size() + 1, 0);
    for (float v : m.data()) seen[static_cast<std::size_t>(v)]++;  // 0 counts padding
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx) {
          const auto value = static_cast<std::size_t>(x.at(0, ch, y, xx));
          CHECK(seen[value] == oracle::windows_covering(y, xx, h, w, size, stride, pad));
        }
  }
}

TEST_CASE("col2im inverts a 1x1 im2col exactly") {
  std::mt19937_64 rng(3);
  const Tensor x = oracle::random_tensor(rng, 4, 5, 3);
  CHECK(col2im(im2col(x, 1, 1, 0), 4, 5, 3, 1, 1, 0) == x);
}

TEST_CASE("col2im sums overlapping windows") {
  const Tensor x = iota_tensor(1, 3, 3);
  const Tensor y = col2im(im2col(x, 2, 1, 0), 1, 3, 3, 2, 1, 0);
  // centre is covered by all four 2x2 windows, corners by one, edges by two
  CHECK(y.at(0, 0, 1, 1) == 4 * x.at(0, 0, 1, 1));
  CHECK(y.at(0, 0, 0, 0) == x.at(0, 0, 0, 0));
  CHECK(y.at(0, 0, 0, 1) == 2 * x.at(0, 0, 0, 1));
}

TEST_CASE("col2im is the adjoint of im2col") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t size = 1 + rng() % 4, stride = 1 + rng() % 3, pad = rng() % 3;
    const std::size_t c = 1 + rng() % 4;
    std::size_t h = size + rng() % 7, w = size + rng() % 7;
    h += (stride - (h + 2 * pad - size) % stride) % stride;
    w += (stride - (w + 2 * pad - size) % stride) % stride;
    const Tensor x = oracle::random_tensor(rng, c, h, w);
    const Matrix cols = im2col(x, size, stride, pad);
    const Matrix y(cols.rows(), cols.cols(), oracle::random_floats(rng, cols.rows() * cols.cols()));
    const Tensor back = col2im(y, c, h, w, size, stride, pad);

    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < cols.data().size(); ++i) lhs += double(cols.data()[i]) * y.data()[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += double(x.data()[i]) * back.data()[i];
    CHECK(oracle::close(lhs, rhs, 1e-4, 1e-6));
  }
}

TEST_CASE("col2im checks matrix dims") {
  CHECK(code_of([] { col2im(Matrix(4, 5), 1, 3, 3, 2, 1, 0); }) == ErrorCode::DimMismatch);
}

TEST_CASE("activations") {
  CHECK(activate(-3.5f, Activation::Linear) == -3.5f);
  CHECK(activate(-1.0f, Activation::Leaky) == doctest::Approx(-0.1f));
  CHECK(activate(2.0f, Activation::Leaky) == 2.0f);
  CHECK(activate(-2.0f, Activation::Relu) == 0.0f);
  CHECK(activate(0.0f, Activation::Logistic) == 0.5f);
  CHECK(parse_activation("leaky") == Activation::Leaky);
  CHECK(code_of([] { parse_activation("mish"); }) == ErrorCode::InvalidValue);
}

TEST_CASE("maxpool") {
  const Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  const Tensor y = maxpool(x, 2, 2, 0);
  REQUIRE(y.dims() == Dims4{1, 1, 1, 1});
  CHECK(y.data()[0] == 4.0f);

  // Darknet default padding (size-1) keeps a stride-1 pool the same size and
  // pads with -inf, so negative borders survive.
  const Tensor neg({1, 1, 2, 2}, {-4, -3, -2, -1});
  const Tensor same = maxpool(neg, 2, 1, 1);
  REQUIRE(same.dims() == Dims4{1, 1, 2, 2});
  CHECK(same.data()[0] == -1.0f);
  CHECK(same.data()[3] == -1.0f);
  CHECK(same.data()[1] == -1.0f);
}

TEST_CASE("avgpool of a constant tensor is the constant") {
  Tensor x({1, 3, 4, 5});
  for (float& v : x.data()) v = 2.25f;
  const Tensor y = avgpool(x);
  REQUIRE(y.dims() == Dims4{1, 3, 1, 1});
  for (float v : y.data()) CHECK(v == 2.25f);
}

TEST_CASE("softmax") {
  const Tensor half = softmax(Tensor({1, 2, 1, 1}, {0, 0}));
  CHECK(half.data()[0] == 0.5f);
  CHECK(half.data()[1] == 0.5f);
  CHECK(code_of([] { softmax(Tensor({1, 2, 2, 1})); }) == ErrorCode::DimMismatch);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c = 1 + rng() % 500;
    // multiples of 1/8 so that adding an integer shift is exact
    std::vector<float> v(c);
    for (auto& x : v) x = static_cast<float>(static_cast<int>(rng() % 161) - 80) / 8.0f;
    const Tensor p = softmax(Tensor({1, c, 1, 1}, v));
    double sum = 0;
    for (float x : p.data()) sum += x;
    CHECK(std::abs(sum - 1.0) <= 1e-6);

    const float shift = static_cast<float>(static_cast<int>(rng() % 200) - 100);
    for (auto& x : v) x += shift;
    const Tensor q = softmax(Tensor({1, c, 1, 1}, v));
    for (std::size_t i = 0; i < c; ++i) CHECK(std::abs(p.data()[i] - q.data()[i]) <= 1e-6);
  }
}

TEST_CASE("raw tensor files") {
  std::mt19937_64 rng(1);
  const Tensor x = oracle::random_tensor(rng, 2, 3, 4);
  const auto bytes = encode_raw_tensor(x);
  CHECK(bytes.size() == 16 + 24 * 4);
  CHECK(bytes[0] == 1);
  CHECK(bytes[4] == 2);
  CHECK(bytes[8] == 3);
  CHECK(bytes[12] == 4);
  CHECK(decode_raw_tensor(bytes) == x);

  auto shorter = bytes;
  shorter.pop_back();
  CHECK(code_of([&] { decode_raw_tensor(shorter); }) == ErrorCode::TruncatedFile);
  auto longer = bytes;
  longer.push_back(0);
  CHECK(code_of([&] { decode_raw_tensor(longer); }) == ErrorCode::TrailingBytes);
}
