// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mpq {

struct Network;

/// Per-layer bit-widths with the parameter count of each layer. Averages are
/// always computed from the two vectors, never stored.
struct PrecisionAssignment {
  std::vector<int> bits;
  std::vector<std::size_t> params;

  std::size_t size() const { return bits.size(); }
  std::uint64_t total_bits() const;
  std::size_t total_params() const;
  /// Parameter-weighted average (what model size depends on).
  double weighted_average() const;
  double unweighted_average() const;

  /// Throws if the vectors disagree, a bit-width is unsupported, or (when
  /// given) a bit-width is outside `candidates`.
  void validate(std::span<const int> candidates = {}) const;

  static PrecisionAssignment uniform(const Network& net, int bits);
  static PrecisionAssignment for_network(const Network& net, std::vector<int> bits);
};

}  // namespace mpq
