// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mpq/assignment.hpp"
#include "mpq/dataset.hpp"
#include "mpq/model.hpp"
#include "mpq/quant.hpp"
#include "mpq/rng.hpp"

namespace mpq {

/// G = -log(-log(U)), U uniform on (0, 1).
std::vector<double> sample_gumbel(std::size_t n, Rng& rng);

/// softmax((log_gamma + noise) / temperature).
std::vector<double> gumbel_softmax(std::span<const double> log_gamma, std::span<const double> noise,
                                   double temperature);

/// Architecture weights with fresh Gumbel noise.
std::vector<double> gumbel_weights(std::span<const double> log_gamma, double temperature, Rng& rng);

/// Chain rule through gumbel_softmax with the noise held fixed: maps dL/dlambda
/// to dL/dlog_gamma.
std::vector<double> gumbel_softmax_backward(std::span<const double> lambda,
                                            std::span<const double> dlambda, double temperature);

/// Candidate operations of one layer. All candidates share input and output
/// widths, activation and context; they differ in bottleneck or precision.
struct SuperLayer {
  std::vector<FactoredLayer> candidates;
  std::vector<double> log_gamma;
  std::vector<double> complexity;  // C_i: parameters or retained bits
  std::vector<int> labels;         // bottleneck r or bit-width of each candidate

  std::size_t size() const { return candidates.size(); }
};

struct SuperNet {
  std::vector<SuperLayer> layers;
  double temperature = 1.0;
  std::size_t gumbel_samples = 4;
  double penalty = 0.0;

  std::size_t input_dim() const;
  void validate() const;
};

/// lambda[l][i] for each layer and candidate.
using ArchWeights = std::vector<std::vector<double>>;

struct SupernetForward {
  std::vector<Tensor> inputs;                        // spliced layer inputs
  std::vector<std::vector<Tensor>> projections;      // per candidate: input · Bᵀ
  std::vector<std::vector<Tensor>> candidate_outputs;  // per candidate: phi(W x)
  std::vector<Tensor> outputs;                       // mixtures h^l

  const Tensor& logits() const { return outputs.back(); }
};

/// h^l = sum_i lambda_i phi_i(W_i h^(l-1)). Candidates with lambda_i == 0
/// are skipped, so a one-hot lambda reproduces the single-path network exactly.
SupernetForward supernet_forward_full(const SuperNet& sn, const Tensor& x, const ArchWeights& lambda,
                                      std::size_t segment = 0);
Tensor supernet_forward(const SuperNet& sn, const Tensor& x, const ArchWeights& lambda,
                        std::size_t segment = 0);

struct SupernetGrad {
  double loss = 0.0;     // mean cross-entropy
  ArchWeights dlambda;   // d(mean cross-entropy)/d(lambda)
};

SupernetGrad supernet_lambda_grad(const SuperNet& sn, const Dataset& batch, const ArchWeights& lambda);

/// base + eta * sum_{l,i} lambda_i^l C_i^l.
double penalized_loss(double base_loss, const ArchWeights& lambda,
                      const std::vector<std::vector<double>>& complexity, double eta);

struct SearchSchedule {
  std::size_t stage1_epochs = 20;
  std::size_t stage2_epochs = 20;
  double heldout_fraction = 0.05;
  double temperature_start = 5.0;
  double temperature_end = 0.1;
  std::uint64_t seed = 0;
  double weight_learning_rate = 0.05;
  double arch_learning_rate = 0.5;
  std::size_t batch_size = 32;
  std::size_t patience = 5;
  std::size_t semi_orth_interval = 4;

  void validate() const;
  /// Geometric interpolation from start (epoch 0) to end (last epoch).
  double temperature_at(std::size_t epoch) const;
};

struct SearchResult {
  std::vector<std::size_t> selection;  // argmax_i log_gamma per layer
  /// log_gamma of every layer after each stage-2 update.
  std::vector<ArchWeights> trajectory;
  std::vector<double> stage1_loss;  // mean held-in mini-batch loss per epoch
  std::vector<double> stage2_loss;  // mean penalized held-out loss per epoch
  SuperNet supernet;
};

/// argmax per layer; ties resolve to the lowest index.
std::vector<std::size_t> select_architecture(const ArchWeights& log_gamma);

/// Stage 1 trains candidate weights on the training split with a uniformly
/// sampled one-hot path per mini-batch (early stop after `patience` epochs
/// without improvement). Stage 2 freezes the weights and descends the
/// penalized held-out loss in log_gamma, averaging the gradient over
/// `gumbel_samples` noise draws, while the temperature anneals.
SearchResult pipelined_search(SuperNet sn, const Dataset& data, const SearchSchedule& sched);

/// Layers built from `specs`; every layer except the last gets one candidate
/// per entry of `choices` that fits (r <= min(out, in)), each freshly
/// initialized. The last layer keeps spec.bottleneck. C_i = parameter count.
SuperNet make_dim_supernet(std::size_t input_dim, std::span<const LayerSpec> specs,
                           std::span<const std::size_t> choices, Rng& rng);

Network extract_network(const SuperNet& sn, std::span<const std::size_t> selection);

/// One ADMM-trained uniform-precision network per candidate bit-width,
/// trained in parallel (stream seed.split(bits) for each).
std::vector<QuantizedNetwork> pretrain_precision_candidates(const Network& net, const Dataset& data,
                                                            std::span<const int> candidate_bits,
                                                            const TrainConfig& cfg, double rho,
                                                            std::size_t jobs = 1);

struct PrecisionNasResult {
  PrecisionAssignment assignment;
  SearchResult search;
};

/// Precision search over pretrained candidates (pretrained[k] is the model
/// at candidate_bits[k]); C_i^l = bits_i * params_l. Weight training is
/// skipped: the candidates are fixed quantized layers.
PrecisionNasResult precision_nas(const std::vector<QuantizedNetwork>& pretrained,
                                 std::span<const int> candidate_bits, const Dataset& data,
                                 double eta, const SearchSchedule& sched,
                                 std::size_t gumbel_samples = 4);

}  // namespace mpq
