// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpq/size.hpp"

#include <cmath>

#include "mpq/errors.hpp"

namespace mpq {

std::uint64_t full_precision_bytes(std::uint64_t params) { return params * 4; }

std::uint64_t model_size_bytes(const Network& net) { return full_precision_bytes(net.param_count()); }

std::uint64_t packed_code_bytes(std::uint64_t params, int bits) {
  if (!is_supported_bits(bits)) throw ArgumentError("packed_code_bytes: unsupported bit-width");
  return (params * static_cast<std::uint64_t>(bits) + 7) / 8;
}

std::uint64_t model_size_bytes(const QuantizedNetwork& model) {
  std::uint64_t total = kHeaderBytes;
  for (const auto& l : model.layers) {
    total += kLayerOverheadBytes + packed_code_bytes(l.param_count(), l.table.bits());
  }
  return total;
}

double megabytes(std::uint64_t bytes) { return static_cast<double>(bytes) / 1e6; }

double round1(double x) { return std::round(x * 10.0) / 10.0; }

double compression_ratio(double baseline, double compressed) {
  if (!(baseline > 0.0) || !(compressed > 0.0)) {
    throw ArgumentError("compression_ratio: sizes must be positive");
  }
  return round1(baseline / compressed);
}

SizeReport size_report(const QuantizedNetwork& model) {
  SizeReport r;
  r.total_bytes = kHeaderBytes;
  std::uint64_t params = 0;
  double bit_sum = 0.0;
  double weighted = 0.0;
  for (const auto& l : model.layers) {
    LayerSize s;
    s.bits = l.table.bits();
    s.params = l.param_count();
    s.code_bytes = packed_code_bytes(s.params, s.bits);
    s.overhead_bytes = kLayerOverheadBytes;
    r.total_bytes += s.code_bytes + s.overhead_bytes;
    params += s.params;
    bit_sum += s.bits;
    weighted += static_cast<double>(s.bits) * static_cast<double>(s.params);
    r.layers.push_back(s);
  }
  r.full_precision_bytes = full_precision_bytes(params);
  if (!model.layers.empty()) {
    r.unweighted_average_bits = bit_sum / static_cast<double>(model.layers.size());
    if (params > 0) r.weighted_average_bits = weighted / static_cast<double>(params);
  }
  if (r.full_precision_bytes > 0) {
    r.compression_ratio = compression_ratio(static_cast<double>(r.full_precision_bytes),
                                            static_cast<double>(r.total_bytes));
  }
  return r;
}

}  // namespace mpq
