#pragma once

// Shared fixtures for the cfg corpus under tests/data and Darknet weights
// files with random parameters.

#include <bit>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "streamgemm/darknet.hpp"
#include "support/oracles.hpp"

namespace streamgemm::corpus {

inline std::string read_cfg(const std::string& name) {
  std::ifstream f(std::string(STREAMGEMM_TEST_DATA) + "/cfg/" + name);
  if (!f) throw Error(ErrorCode::Io, "cannot open corpus file " + name);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct Case {
  const char* file;
  std::vector<Shape3> out_dims;  // empty when an error is expected
  ErrorCode error = ErrorCode::Io;
};

inline const std::vector<Case>& cases() {
  static const std::vector<Case> all{
      {"conv_same.cfg", {{2, 4, 4}}},
      {"deconv_upsample.cfg", {{4, 10, 10}}},
      {"maxpool_chain.cfg", {{4, 8, 8}, {4, 4, 4}, {4, 4, 4}}},
      {"classifier.cfg", {{3, 4, 4}, {3, 1, 1}, {5, 1, 1}, {5, 1, 1}}},
      {"connected_only.cfg", {{4, 1, 1}}},
      {"encoder_decoder.cfg", {{4, 5, 5}, {2, 10, 10}}},
      {"unknown_key.cfg", {{1, 2, 2}}},
      {"empty.cfg", {}, ErrorCode::EmptyConfig},
      {"comments_only.cfg", {}, ErrorCode::EmptyConfig},
      {"net_only.cfg", {}, ErrorCode::EmptyConfig},
      {"missing_net.cfg", {}, ErrorCode::MissingNetHeader},
      {"route_section.cfg", {}, ErrorCode::UnknownSection},
      {"nonintegral.cfg", {}, ErrorCode::NonIntegralOutputDim},
      {"missing_filters.cfg", {}, ErrorCode::MissingRequiredKey},
      {"missing_channels.cfg", {}, ErrorCode::MissingRequiredKey},
      {"bad_value.cfg", {}, ErrorCode::InvalidValue},
  };
  return all;
}

inline void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_f32(std::vector<std::uint8_t>& b, float v) { put_u32(b, std::bit_cast<std::uint32_t>(v)); }

// Version 0.2.0 header with a 64-bit seen counter of zero.
inline std::vector<std::uint8_t> header_v02() {
  std::vector<std::uint8_t> b;
  put_u32(b, 0);
  put_u32(b, 2);
  put_u32(b, 0);
  put_u32(b, 0);
  put_u32(b, 0);
  return b;
}

// Writes random parameters in Darknet order for `g`, including batchnorm
// blocks where the graph asks for them.
inline std::vector<std::uint8_t> random_weights_file(const NetworkGraph& g, std::mt19937_64& rng) {
  auto bytes = header_v02();
  const auto put = [&](std::size_t n, float lo, float hi) {
    for (float v : oracle::random_floats(rng, n, lo, hi)) put_f32(bytes, v);
  };
  for (const auto& l : g.layers) {
    if (!l.has_parameters()) continue;
    put(l.filters, -1, 1);
    if (l.kind == LayerKind::Connected) put(l.weight_count(), -1, 1);
    if (l.batch_normalize) {
      put(l.filters, 0.5f, 1.5f);   // gamma
      put(l.filters, -0.5f, 0.5f);  // mean
      put(l.filters, 0.1f, 2.0f);   // var
    }
    if (l.kind != LayerKind::Connected) put(l.weight_count(), -1, 1);
  }
  return bytes;
}

}  // namespace streamgemm::corpus
