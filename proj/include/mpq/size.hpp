// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mpq/model.hpp"
#include "mpq/quant.hpp"

namespace mpq {

inline constexpr std::uint64_t kHeaderBytes = 10;      // magic, version, layer count
inline constexpr std::uint64_t kLayerDimBytes = 12;    // out_dim, in_dim, r
inline constexpr std::uint64_t kLayerBitsBytes = 1;    // n_l
inline constexpr std::uint64_t kLayerScaleBytes = 8;   // alpha
inline constexpr std::uint64_t kLayerOverheadBytes = kLayerDimBytes + kLayerBitsBytes + kLayerScaleBytes;

/// 32-bit floats: 4 bytes per parameter.
std::uint64_t full_precision_bytes(std::uint64_t params);
std::uint64_t model_size_bytes(const Network& net);
/// Packed checkpoint size without a shadow section.
std::uint64_t model_size_bytes(const QuantizedNetwork& model);
std::uint64_t packed_code_bytes(std::uint64_t params, int bits);

/// Decimal megabytes.
double megabytes(std::uint64_t bytes);
double round1(double x);
/// baseline / compressed rounded to one decimal.
double compression_ratio(double baseline, double compressed);

struct LayerSize {
  int bits = 0;
  std::uint64_t params = 0;
  std::uint64_t code_bytes = 0;
  std::uint64_t overhead_bytes = 0;
};

struct SizeReport {
  std::vector<LayerSize> layers;
  std::uint64_t header_bytes = kHeaderBytes;
  std::uint64_t total_bytes = 0;
  std::uint64_t full_precision_bytes = 0;
  double compression_ratio = 0.0;
  double weighted_average_bits = 0.0;
  double unweighted_average_bits = 0.0;
};

SizeReport size_report(const QuantizedNetwork& model);

}  // namespace mpq
