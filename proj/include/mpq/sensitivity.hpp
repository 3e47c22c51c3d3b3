// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "mpq/assignment.hpp"
#include "mpq/dataset.hpp"
#include "mpq/model.hpp"
#include "mpq/numeric.hpp"
#include "mpq/rng.hpp"

namespace mpq {

enum class SensitivityMetric { kl, hessian };

std::string_view to_string(SensitivityMetric m);

/// Omega[layer][k] for candidate_bits[k]; complete over every pair.
struct SensitivityTable {
  SensitivityMetric metric = SensitivityMetric::kl;
  std::vector<int> candidate_bits;
  std::vector<std::vector<double>> omega;
  std::size_t frames = 0;  // rows used for evaluation
  std::size_t probes = 0;  // Hutchinson probes (hessian only)
  /// Per-layer Hessian trace estimates, clamped at zero (hessian only).
  std::vector<double> traces;

  std::size_t layers() const { return omega.size(); }
  double at(std::size_t layer, int bits) const;
  void validate() const;
};

/// Sum over frames of KL(P_full || P_quant), where P is the row of
/// sigmoid(logits) normalized to sum to one.
double output_kl(const Tensor& full_logits, const Tensor& quantized_logits);

/// Quantizes only `layer` at `bits` (optimized scale) and compares the
/// network outputs on `frames`.
double kl_sensitivity(const Network& net, std::size_t layer, int bits, const Dataset& frames);

struct TraceEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t probes = 0;
};

/// Hutchinson estimate of tr(H): mean of vᵀHv over Rademacher probes v.
TraceEstimate hutchinson_trace(const std::function<Tensor(const Tensor&)>& hessian_vector,
                               std::size_t dim, std::size_t probes, Rng& rng);
/// Same, with Hv from the finite-difference hvp of `loss` at `params`.
TraceEstimate hutchinson_trace(const Objective& loss, const Tensor& params, std::size_t probes,
                               Rng& rng);

/// Trace of the Hessian of the mean loss on `data` with respect to one layer.
TraceEstimate layer_hessian_trace(const Network& net, std::size_t layer, const Dataset& data,
                                  std::size_t probes, Rng& rng);

/// max(trace, 0) * ||f(theta) - theta||^2.
double curvature_score(double trace, double sq_error);

double curvature_sensitivity(const Network& net, std::size_t layer, int bits,
                             const Dataset& data, std::size_t probes, Rng& rng);

SensitivityTable kl_table(const Network& net, const Dataset& frames,
                          std::span<const int> candidate_bits, std::size_t jobs = 1);

/// Each layer's trace is estimated once with stream rng.split(layer) and
/// shared across bit-widths.
SensitivityTable hessian_table(const Network& net, const Dataset& data,
                               std::span<const int> candidate_bits, std::size_t probes,
                               const Rng& rng, std::size_t jobs = 1);

/// Minimizes sum_l Omega[l][n_l] subject to sum_l params_l * n_l <=
/// target * sum_l params_l, by dynamic programming over layers and the
/// bit budget. Among equal sensitivities the smaller total wins. Throws
/// ArgumentError when the target is below the smallest candidate.
PrecisionAssignment allocate_bits(const SensitivityTable& table, std::span<const std::size_t> params,
                                  double target_avg_bits);

}  // namespace mpq
