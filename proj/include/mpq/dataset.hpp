// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mpq/rng.hpp"
#include "mpq/tensor.hpp"

namespace mpq {

/// Labelled frames. With segment == 0 every row is an independent sample;
/// otherwise rows form consecutive sequences of `segment` frames and
/// batching, splitting and context splicing operate on whole sequences.
struct Dataset {
  Tensor x;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  std::size_t segment = 0;

  std::size_t rows() const { return labels.size(); }
  std::size_t input_dim() const { return x.cols(); }
  /// Number of independent units (rows or sequences).
  std::size_t units() const { return segment ? rows() / segment : rows(); }
  void validate() const;
};

/// Rows of the selected units, in the given order.
Dataset gather(const Dataset& data, std::span<const std::size_t> units);

/// Shuffled unit indices cut into consecutive batches of `batch_units`. A
/// final batch shorter than half that is merged into the one before it.
std::vector<std::vector<std::size_t>> make_batches(std::size_t units, std::size_t batch_units,
                                                   Rng& rng);

struct Split {
  Dataset first;
  Dataset second;
};

/// Random disjoint split; `second` receives round(fraction * units) units.
Split split_dataset(const Dataset& data, double fraction, Rng& rng);

}  // namespace mpq
