// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mpq/dataset.hpp"
#include "mpq/numeric.hpp"
#include "mpq/rng.hpp"
#include "mpq/tensor.hpp"

namespace mpq {

enum class Activation { identity, relu, sigmoid };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

/// Factored affine map W = A·B followed by an elementwise activation.
/// B (r x in) carries the semi-orthogonal constraint. When `context` is
/// non-empty the layer input is the concatenation of the previous layer's
/// frames at t + offset, so in_dim = context.size() * previous width.
struct FactoredLayer {
  Tensor a;  // out x r
  Tensor b;  // r x in
  Activation activation = Activation::identity;
  std::vector<int> context;

  std::size_t out_dim() const { return a.rows(); }
  std::size_t in_dim() const { return b.cols(); }
  std::size_t bottleneck() const { return a.cols(); }
  std::size_t splice_width() const { return context.empty() ? 1 : context.size(); }
  /// Width of the unspliced input (previous layer output).
  std::size_t input_width() const { return in_dim() / splice_width(); }
  std::size_t param_count() const { return a.size() + b.size(); }
  Tensor weight() const;
  void validate() const;
};

/// Shape of one layer, used to build or rebuild networks.
struct LayerSpec {
  std::size_t out_dim = 0;
  std::size_t bottleneck = 0;
  Activation activation = Activation::relu;
  std::vector<int> context;
};

struct Network {
  std::vector<FactoredLayer> layers;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t param_count() const;
  void validate() const;
};

/// B is drawn uniform(+-sqrt(6 / (r + in))) and made semi-orthogonal; A is
/// uniform with variance gain / r (gain 2 for relu, 1 otherwise), which gives
/// W = A·B the variance of a He-initialized dense layer.
FactoredLayer init_layer(std::size_t input_width, const LayerSpec& spec, Rng& rng);
Network init_network(std::size_t input_dim, std::span<const LayerSpec> specs, Rng& rng);

/// Spliced input for a layer: row t holds h[t + o] for each offset o,
/// clamped to the boundaries of the row's sequence (segment == 0 means the
/// whole tensor is one sequence).
Tensor splice(const Tensor& h, std::span<const int> context, std::size_t segment);

/// Adjoint of splice: accumulates each spliced block back onto its source frame.
Tensor unsplice(const Tensor& g, std::span<const int> context, std::size_t segment,
                std::size_t width);

struct ForwardResult {
  std::vector<Tensor> inputs;       // spliced input of each layer
  std::vector<Tensor> projections;  // input · Bᵀ
  std::vector<Tensor> outputs;      // h^l; the last entry is the logits

  const Tensor& logits() const { return outputs.back(); }
};

ForwardResult forward(const Network& net, const Tensor& x, std::size_t segment = 0);

Tensor apply_activation(Activation act, Tensor z);
/// Multiplies `grad` in place by the activation derivative expressed via the output.
void activation_backward(Activation act, const Tensor& output, Tensor& grad);

/// Summed softmax cross-entropy over rows.
double cross_entropy_sum(const Tensor& logits, std::span<const int> labels);
/// d(summed cross-entropy)/d(logits) = softmax - onehot.
Tensor cross_entropy_grad(const Tensor& logits, std::span<const int> labels);

struct LayerGrad {
  Tensor a;
  Tensor b;
};

/// Gradient of the cross-entropy summed over the batch rows (not the mean),
/// together with that summed loss.
struct Gradients {
  std::vector<LayerGrad> layers;
  double loss = 0.0;
};

/// Back-propagates an upstream gradient on the logits through a forward pass.
/// Returns the per-layer parameter gradients; `input_grad`, when non-null,
/// receives the gradient with respect to x.
std::vector<LayerGrad> backward_from(const Network& net, const ForwardResult& fwd,
                                     Tensor logits_grad, std::size_t segment,
                                     Tensor* input_grad = nullptr);

Gradients backward(const Network& net, const Tensor& x, std::span<const int> labels,
                   std::size_t segment = 0);

/// theta -= scale * grad for every factor.
void apply_update(Network& net, const std::vector<LayerGrad>& grads, double scale);

/// ||B·Bᵀ - I||_F.
double semi_orth_residual(const Tensor& b);

/// One step of B <- B - c (B·Bᵀ - I) B, starting from c = 1/2 and halving c
/// until the residual strictly decreases. Returns B unchanged when the
/// residual is already at rounding level. Throws ConditioningError when B is
/// rank deficient.
Tensor semi_orth_step(const Tensor& b);
void semi_orth_step(FactoredLayer& layer);

/// Repeats semi_orth_step until the residual is <= tol. No-op if it already is.
void enforce_semi_orth(FactoredLayer& layer, double tol = 1e-3, int max_steps = 60);

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  std::size_t semi_orth_interval = 4;

  void validate() const;
};

struct TrainResult {
  Network net;
  /// Mean training loss before the first epoch and after each epoch.
  std::vector<double> loss_curve;
};

/// Mini-batch SGD on the mean cross-entropy. Every `semi_orth_interval`
/// steps the constraint is enforced on each layer's B. Throws TrainingError
/// on divergence.
TrainResult train(Network net, const Dataset& data, const TrainConfig& cfg);

double mean_loss(const Network& net, const Dataset& data);
double accuracy(const Network& net, const Dataset& data);
std::vector<int> predict(const Network& net, const Tensor& x, std::size_t segment = 0);

/// Factors of one layer laid out A then B, row-major.
Tensor flatten_layer(const FactoredLayer& layer);
void assign_layer(FactoredLayer& layer, const Tensor& flat);
Tensor flatten_grad(const LayerGrad& g);

/// Mean cross-entropy on `data` as a function of layer l's flattened factors.
Objective layer_objective(const Network& net, std::size_t layer, const Dataset& data);

}  // namespace mpq
