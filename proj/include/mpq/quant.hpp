// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mpq/assignment.hpp"
#include "mpq/model.hpp"

namespace mpq {

inline constexpr std::array<int, 5> kSupportedBits{1, 2, 4, 8, 16};

bool is_supported_bits(int bits);

/// Largest code magnitude: 2^(n-1) - 1 for n >= 2, and 1 for binarization.
std::int32_t max_code(int bits);

/// Symmetric level set {0, +-a, ..., +-a(2^(n-1) - 1)} for n >= 2 and
/// {-a, +a} for n = 1. The value of code c is exactly c * alpha.
class QuantTable {
 public:
  QuantTable(int bits, double alpha);

  int bits() const { return bits_; }
  double alpha() const { return alpha_; }
  std::int32_t max_code() const { return mpq::max_code(bits_); }
  bool valid_code(std::int32_t code) const;
  double level(std::int32_t code) const { return static_cast<double>(code) * alpha_; }
  /// All levels in ascending order.
  std::vector<double> levels() const;

  bool operator==(const QuantTable&) const = default;

 private:
  int bits_;
  double alpha_;
};

QuantTable build_table(int bits, double alpha);

struct QuantizedValue {
  double value;
  std::int32_t code;
};

/// Nearest level; ties go to the smaller magnitude (and to +a over -a for
/// 1-bit tables at theta = 0).
QuantizedValue quantize_nearest(double theta, const QuantTable& table);

double quantization_sq_error(std::span<const double> weights, const QuantTable& table);

struct ScaleFit {
  QuantTable table;
  std::vector<std::int32_t> codes;
  double sq_error = 0.0;  // sum of squared differences
  bool degenerate = false;
};

/// Per-cluster scale minimizing the squared quantization error.
///   - weights already on a grid: the largest alpha reproducing them exactly;
///   - 1-bit: alpha = mean |theta|;
///   - otherwise an exact sweep over the piecewise-quadratic error in alpha
///     when weights * levels is small, else alternating minimization
///     (nearest codes <-> alpha = sum|theta||q| / sum q^2) from max|theta|/M.
/// The result is never worse than alpha = max|theta| / M. All-zero weights
/// give a degenerate fit (alpha = 1 with zero codes; 1-bit uses the smallest
/// normal double so the dequantized values stay ~0).
ScaleFit optimize_scale(std::span<const double> weights, int bits);

/// One weight cluster (a whole factored layer: A then B) on its table.
struct QuantizedLayer {
  std::size_t cluster = 0;
  std::size_t out_dim = 0;
  std::size_t in_dim = 0;
  std::size_t bottleneck = 0;
  Activation activation = Activation::identity;
  std::vector<int> context;
  QuantTable table{1, 1.0};
  std::vector<std::int32_t> codes;  // A row-major, then B row-major

  std::size_t param_count() const { return codes.size(); }
  FactoredLayer dequantize() const;
  void validate() const;
};

struct QuantizedNetwork {
  std::vector<QuantizedLayer> layers;

  Network dequantize() const;
  PrecisionAssignment assignment() const;
  std::vector<QuantTable> tables() const;
};

QuantizedLayer quantize_layer(const FactoredLayer& layer, int bits, std::size_t cluster = 0);
/// Nearest-level codes against a fixed table (no scale search).
QuantizedLayer quantize_layer(const FactoredLayer& layer, const QuantTable& table,
                              std::size_t cluster = 0);

QuantizedNetwork quantize_model(const Network& net, const PrecisionAssignment& assignment);
QuantizedNetwork quantize_with_tables(const Network& net, std::span<const QuantTable> tables);

/// Result of a quantization-aware training run.
struct QuantTrainResult {
  QuantizedNetwork model;
  Network shadow;  // full-precision parameters the updates were applied to
  /// Mean training loss of the quantized model before training and after each epoch.
  std::vector<double> loss_curve;
  /// Scale of every layer's table at the start of each epoch.
  std::vector<std::vector<double>> alpha_history;
};

/// Straight-through gradient: the summed-loss gradient at the quantized
/// weights, to be applied to the shadow parameters as if the quantizer were
/// the identity.
std::vector<LayerGrad> ste_gradient(const Network& shadow, std::span<const QuantTable> tables,
                                    const Dataset& batch, double* loss = nullptr);

/// Modified back-propagation: tables fixed from the initial quantize_model,
/// ste_gradient applied to the shadow parameters.
QuantTrainResult train_modified_bp(const Network& net, const Dataset& data,
                                   const PrecisionAssignment& assignment, const TrainConfig& cfg);

/// Quantization-aware fine-tuning with ste_gradient. Before every epoch after
/// the first, each layer's scale is re-optimized: among the current scale and
/// 0.7 to 1.3 times the L2-optimal scale of the shadow weights, the one with
/// the lowest training loss is kept (layer by layer). Returns the epoch
/// snapshot (epoch 0 = quantize_model) with the lowest quantized training loss.
QuantTrainResult train_qat(const Network& net, const Dataset& data,
                           const PrecisionAssignment& assignment, const TrainConfig& cfg);

struct AdmmState {
  std::vector<Tensor> dual;       // scaled dual u, one per cluster
  std::vector<Tensor> auxiliary;  // q, on the grid of `tables`
  std::vector<QuantTable> tables;
  double rho = 0.0;
};

struct AdmmIteration {
  double primal_residual = 0.0;  // ||theta - q||_F over all clusters
  double rho = 0.0;
};

struct AdmmOptions {
  double rho = 1.0;
  double learning_rate = 0.05;
  std::size_t iterations = 10;
  /// theta-update SGD steps per ADMM iteration.
  std::size_t inner_steps = 1;
  /// Multiply rho by this when the residual shrinks by less than 5%.
  double rho_growth = 2.0;
};

/// Gradient of the (mean) loss for each cluster at theta; called once per
/// inner step, so a caller may advance through mini-batches.
using ClusterGradient = std::function<std::vector<Tensor>(const std::vector<Tensor>& theta)>;

struct AdmmRun {
  std::vector<Tensor> theta;
  AdmmState state;
  std::vector<AdmmIteration> history;
};

/// ADMM over weight clusters: theta-update by SGD on
/// loss + (rho/2)||theta - q + u||^2, q = grid projection of theta + u with a
/// re-optimized scale, u <- u + theta - q.
AdmmRun admm_quantize(std::vector<Tensor> theta, std::span<const int> bits,
                      const ClusterGradient& loss_gradient, const AdmmOptions& options);

struct AdmmResult {
  QuantizedNetwork model;
  Network shadow;
  AdmmState state;
  std::vector<AdmmIteration> history;
};

/// 0.01 * mean|gradient| / mean|theta| on the full training set.
double default_admm_rho(const Network& net, const Dataset& data);

/// Network ADMM: one ADMM iteration per epoch with one inner SGD step per
/// mini-batch. rho <= 0 selects the larger of default_admm_rho and
/// 1 / (learning_rate * inner steps per epoch).
AdmmResult train_admm(const Network& net, const Dataset& data,
                      const PrecisionAssignment& assignment, const TrainConfig& cfg, double rho);

}  // namespace mpq
