// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

// Published reference values used by the tests.

#pragma once

#include <cstddef>
#include <vector>

namespace fixtures {

// Bottleneck dimensionality choices and the searched per-layer indices.
inline const std::vector<std::size_t> kDimChoices{25, 50, 80, 100, 120, 160, 200, 240};
inline const std::vector<std::size_t> kSearchedDimIndices{2, 3, 2, 0, 2, 2, 2, 1, 2, 1, 0, 3, 5, 5};
inline constexpr std::size_t kBaselineDimIndex = 5;

// Per-layer bit-widths of the mixed-precision system with an 8-bit target.
inline const std::vector<int> kFootnoteBits{16, 8, 8, 1, 4, 4, 4, 2, 4, 2, 1, 4, 8, 8, 16};

// Parameter counts (millions) and sizes (MB) of the full-precision systems.
inline constexpr double kBaselineParamsM = 18.6;
inline constexpr double kBaselineSizeMB = 74.4;
inline constexpr double kSearchedParamsM = 12.4;
inline constexpr double kSearchedSizeMB = 49.6;

// Compression ratios printed with one decimal.
inline constexpr double kSizeA = 74.4, kSizeB = 49.6, kRatioAB = 1.5;
inline constexpr double kSizeC = 180.4, kSizeD = 13.3, kRatioCD = 13.6;

}  // namespace fixtures
