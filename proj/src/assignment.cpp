// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpq/assignment.hpp"

#include <algorithm>
#include <string>

#include "mpq/errors.hpp"
#include "mpq/model.hpp"
#include "mpq/quant.hpp"

namespace mpq {

std::uint64_t PrecisionAssignment::total_bits() const {
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    total += static_cast<std::uint64_t>(bits[i]) * params[i];
  }
  return total;
}

std::size_t PrecisionAssignment::total_params() const {
  std::size_t n = 0;
  for (auto p : params) n += p;
  return n;
}

double PrecisionAssignment::weighted_average() const {
  const auto n = total_params();
  return n == 0 ? 0.0 : static_cast<double>(total_bits()) / static_cast<double>(n);
}

double PrecisionAssignment::unweighted_average() const {
  if (bits.empty()) return 0.0;
  double s = 0.0;
  for (int b : bits) s += b;
  return s / static_cast<double>(bits.size());
}

void PrecisionAssignment::validate(std::span<const int> candidates) const {
  if (bits.size() != params.size()) {
    throw ArgumentError("precision assignment: bits and params have different lengths");
  }
  for (int b : bits) {
    if (!is_supported_bits(b)) throw ArgumentError("unsupported bit-width " + std::to_string(b));
    if (!candidates.empty() && std::find(candidates.begin(), candidates.end(), b) == candidates.end()) {
      throw ArgumentError("bit-width " + std::to_string(b) + " is not a candidate");
    }
  }
}

PrecisionAssignment PrecisionAssignment::uniform(const Network& net, int bits) {
  return for_network(net, std::vector<int>(net.layers.size(), bits));
}

PrecisionAssignment PrecisionAssignment::for_network(const Network& net, std::vector<int> bits) {
  if (bits.size() != net.layers.size()) {
    throw ArgumentError("precision assignment: expected " + std::to_string(net.layers.size()) +
                        " bit-widths, got " + std::to_string(bits.size()));
  }
  PrecisionAssignment a;
  a.bits = std::move(bits);
  for (const auto& l : net.layers) a.params.push_back(l.param_count());
  a.validate();
  return a;
}

}  // namespace mpq
