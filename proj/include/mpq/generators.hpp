// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mpq/dataset.hpp"
#include "mpq/model.hpp"

namespace mpq {

/// Isotropic Gaussian classes. Centres lie on orthonormal directions (random
/// unit directions when classes > dim) at pairwise distance separation * sigma.
struct BlobsSpec {
  std::size_t classes = 4;
  std::size_t dim = 8;
  std::size_t samples = 400;
  double separation = 4.0;
  double sigma = 1.0;
  std::uint64_t seed = 0;
};

/// Labels are the argmax of a random teacher whose first layer has
/// bottleneck `rank`.
struct PlantedRankSpec {
  std::size_t input_dim = 32;
  std::size_t hidden = 32;
  std::size_t rank = 8;
  std::size_t classes = 8;
  std::size_t samples = 2000;
  std::uint64_t seed = 0;
};

/// Sequences of Gaussian frames; the label of frame t depends on the frames
/// at t + offset for every offset in `context`.
struct SequenceSpec {
  std::size_t dim = 8;
  std::size_t classes = 4;
  std::size_t sequences = 40;
  std::size_t length = 20;
  std::vector<int> context{-1, 0, 1};
  std::uint64_t seed = 0;
};

struct DatasetSpec {
  std::string generator = "blobs";  // blobs | planted_rank | sequence
  BlobsSpec blobs;
  PlantedRankSpec planted_rank;
  SequenceSpec sequence;
};

Dataset make_blobs(const BlobsSpec& spec);

struct PlantedRank {
  Network teacher;
  Dataset data;
};
PlantedRank make_planted_rank(const PlantedRankSpec& spec);

Dataset make_sequence(const SequenceSpec& spec);

Dataset gen_dataset(const DatasetSpec& spec);

}  // namespace mpq
