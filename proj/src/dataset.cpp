// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpq/dataset.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "mpq/errors.hpp"

namespace mpq {

void Dataset::validate() const {
  if (labels.empty()) throw ArgumentError("dataset is empty");
  if (x.rank() != 2 || x.rows() != labels.size()) {
    throw DimensionError("dataset: feature rows do not match label count");
  }
  if (segment != 0 && labels.size() % segment != 0) {
    throw DimensionError("dataset: row count is not a multiple of the segment length");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw ArgumentError("dataset: label " + std::to_string(y) + " out of range");
    }
  }
}

Dataset gather(const Dataset& data, std::span<const std::size_t> units) {
  const std::size_t per = data.segment ? data.segment : 1;
  const std::size_t cols = data.x.cols();
  Dataset out;
  out.num_classes = data.num_classes;
  out.segment = data.segment;
  std::vector<double> xs;
  xs.reserve(units.size() * per * cols);
  out.labels.reserve(units.size() * per);
  for (std::size_t u : units) {
    if (u >= data.units()) throw ArgumentError("gather: unit index out of range");
    for (std::size_t r = u * per; r < (u + 1) * per; ++r) {
      auto row = data.x.row(r);
      xs.insert(xs.end(), row.begin(), row.end());
      out.labels.push_back(data.labels[r]);
    }
  }
  if (out.labels.empty()) throw ArgumentError("gather: no units selected");
  out.x = Tensor({out.labels.size(), cols}, std::move(xs));
  return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t units, std::size_t batch_units,
                                                   Rng& rng) {
  if (batch_units == 0) throw ArgumentError("batch size must be positive");
  std::vector<std::size_t> order(units);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < units; start += batch_units) {
    const std::size_t end = std::min(units, start + batch_units);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  // A short tail would take a full-size step on very few samples.
  if (batches.size() > 1 && 2 * batches.back().size() < batch_units) {
    auto tail = std::move(batches.back());
    batches.pop_back();
    batches.back().insert(batches.back().end(), tail.begin(), tail.end());
  }
  return batches;
}

Split split_dataset(const Dataset& data, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ArgumentError("split fraction must be in (0, 1)");
  const std::size_t n = data.units();
  const auto held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (held == 0 || held >= n) throw ArgumentError("split leaves an empty side");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<std::size_t> rest(order.begin() + static_cast<std::ptrdiff_t>(held), order.end());
  std::vector<std::size_t> second(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held));
  return {gather(data, rest), gather(data, second)};
}

}  // namespace mpq
