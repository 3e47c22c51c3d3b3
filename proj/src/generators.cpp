// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpq/generators.hpp"

#include <cmath>

#include "mpq/errors.hpp"

namespace mpq {

namespace {

std::vector<std::vector<double>> blob_centres(std::size_t classes, std::size_t dim, double radius,
                                              Rng& rng) {
  std::vector<std::vector<double>> c(classes, std::vector<double>(dim));
  for (std::size_t k = 0; k < classes; ++k) {
    auto& v = c[k];
    for (;;) {
      for (auto& e : v) e = rng.normal();
      if (k < dim) {
        for (std::size_t j = 0; j < k; ++j) {
          double p = 0.0;
          for (std::size_t i = 0; i < dim; ++i) p += v[i] * c[j][i];
          for (std::size_t i = 0; i < dim; ++i) v[i] -= p * c[j][i];
        }
      }
      double n = 0.0;
      for (double e : v) n += e * e;
      n = std::sqrt(n);
      if (n > 1e-8) {
        for (auto& e : v) e /= n;
        break;
      }
    }
  }
  for (auto& v : c) {
    for (auto& e : v) e *= radius;
  }
  return c;
}

}  // namespace

Dataset make_blobs(const BlobsSpec& spec) {
  if (spec.classes < 2 || spec.dim == 0 || spec.samples == 0) {
    throw ArgumentError("blobs: need classes >= 2, dim >= 1, samples >= 1");
  }
  if (!(spec.sigma > 0.0) || !(spec.separation >= 0.0)) throw ArgumentError("blobs: invalid sigma or separation");
  Rng rng(spec.seed);
  Rng centre_rng = rng.split(0);
  Rng sample_rng = rng.split(1);
  // Unit vectors at distance sqrt(2) apart; scale to the requested separation.
  const auto centres = blob_centres(spec.classes, spec.dim, spec.separation * spec.sigma / std::sqrt(2.0), centre_rng);
  Dataset d;
  d.num_classes = spec.classes;
  d.x = Tensor({spec.samples, spec.dim});
  d.labels.resize(spec.samples);
  for (std::size_t i = 0; i < spec.samples; ++i) {
    const std::size_t k = i % spec.classes;
    d.labels[i] = static_cast<int>(k);
    for (std::size_t j = 0; j < spec.dim; ++j) d.x(i, j) = centres[k][j] + spec.sigma * sample_rng.normal();
  }
  return d;
}

PlantedRank make_planted_rank(const PlantedRankSpec& spec) {
  if (spec.input_dim == 0 || spec.hidden == 0 || spec.classes < 2 || spec.samples == 0) {
    throw ArgumentError("planted_rank: invalid sizes");
  }
  if (spec.rank == 0 || spec.rank > std::min(spec.input_dim, spec.hidden)) {
    throw ArgumentError("planted_rank: rank must be in [1, min(input_dim, hidden)]");
  }
  Rng rng(spec.seed);
  Rng teacher_rng = rng.split(0);
  Rng sample_rng = rng.split(1);
  const LayerSpec specs[] = {
      {spec.hidden, spec.rank, Activation::relu, {}},
      {spec.classes, std::min(spec.hidden, spec.classes), Activation::identity, {}},
  };
  PlantedRank out;
  out.teacher = init_network(spec.input_dim, specs, teacher_rng);
  Dataset& d = out.data;
  d.num_classes = spec.classes;
  d.x = Tensor({spec.samples, spec.input_dim});
  for (auto& v : d.x.values()) v = sample_rng.normal();
  d.labels = predict(out.teacher, d.x);
  return out;
}

Dataset make_sequence(const SequenceSpec& spec) {
  if (spec.dim == 0 || spec.classes < 2 || spec.sequences == 0 || spec.length == 0) {
    throw ArgumentError("sequence: invalid sizes");
  }
  if (spec.context.empty()) throw ArgumentError("sequence: empty context");
  Rng rng(spec.seed);
  Rng proj_rng = rng.split(0);
  Rng sample_rng = rng.split(1);
  Tensor p({spec.classes, spec.dim});
  for (auto& v : p.values()) v = proj_rng.normal();
  Dataset d;
  d.num_classes = spec.classes;
  d.segment = spec.length;
  d.x = Tensor({spec.sequences * spec.length, spec.dim});
  for (auto& v : d.x.values()) v = sample_rng.normal();
  const Tensor spliced = splice(d.x, spec.context, spec.length);
  d.labels.resize(d.x.rows());
  for (std::size_t t = 0; t < d.x.rows(); ++t) {
    std::size_t best = 0;
    double best_score = 0.0;
    for (std::size_t k = 0; k < spec.classes; ++k) {
      double s = 0.0;
      for (std::size_t o = 0; o < spec.context.size(); ++o) {
        for (std::size_t j = 0; j < spec.dim; ++j) s += p(k, j) * spliced(t, o * spec.dim + j);
      }
      if (k == 0 || s > best_score) {
        best = k;
        best_score = s;
      }
    }
    d.labels[t] = static_cast<int>(best);
  }
  return d;
}

Dataset gen_dataset(const DatasetSpec& spec) {
  if (spec.generator == "blobs") return make_blobs(spec.blobs);
  if (spec.generator == "planted_rank") return make_planted_rank(spec.planted_rank).data;
  if (spec.generator == "sequence") return make_sequence(spec.sequence);
  throw ArgumentError("unknown dataset generator '" + spec.generator + "'");
}

}  // namespace mpq
