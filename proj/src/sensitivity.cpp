// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpq/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "mpq/errors.hpp"
#include "mpq/parallel.hpp"
#include "mpq/quant.hpp"

namespace mpq {

std::string_view to_string(SensitivityMetric m) {
  return m == SensitivityMetric::kl ? "kl" : "hessian";
}

double SensitivityTable::at(std::size_t layer, int bits) const {
  const auto it = std::find(candidate_bits.begin(), candidate_bits.end(), bits);
  if (it == candidate_bits.end() || layer >= omega.size()) {
    throw ArgumentError("sensitivity table has no entry for layer " + std::to_string(layer) +
                        " at " + std::to_string(bits) + " bits");
  }
  return omega[layer][static_cast<std::size_t>(it - candidate_bits.begin())];
}

void SensitivityTable::validate() const {
  if (candidate_bits.empty()) throw ArgumentError("sensitivity table: no candidate bits");
  for (const auto& row : omega) {
    if (row.size() != candidate_bits.size()) throw ArgumentError("sensitivity table is incomplete");
    for (double v : row) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw NumericError("sensitivity table: invalid entry");
    }
  }
}

double output_kl(const Tensor& full_logits, const Tensor& quantized_logits) {
  require_same_shape(full_logits, quantized_logits, "output_kl");
  const std::size_t dims = full_logits.cols();
  std::vector<double> p(dims), q(dims);
  double total = 0.0;
  for (std::size_t t = 0; t < full_logits.rows(); ++t) {
    double sp = 0.0, sq = 0.0;
    for (std::size_t k = 0; k < dims; ++k) {
      p[k] = 1.0 / (1.0 + std::exp(-full_logits(t, k)));
      q[k] = 1.0 / (1.0 + std::exp(-quantized_logits(t, k)));
      sp += p[k];
      sq += q[k];
    }
    for (std::size_t k = 0; k < dims; ++k) {
      const double pk = p[k] / sp, qk = q[k] / sq;
      if (pk > 0.0) total += pk * std::log(pk / qk);
    }
  }
  if (!std::isfinite(total)) throw NumericError("output_kl: non-finite divergence");
  // Rounding can leave a tiny negative sum for near-identical outputs.
  return std::max(total, 0.0);
}

double kl_sensitivity(const Network& net, std::size_t layer, int bits, const Dataset& frames) {
  if (frames.rows() == 0) throw ArgumentError("kl_sensitivity: no evaluation frames");
  if (layer >= net.layers.size()) throw ArgumentError("kl_sensitivity: layer index out of range");
  Network quantized = net;
  quantized.layers[layer] = quantize_layer(net.layers[layer], bits, layer).dequantize();
  const Tensor full = forward(net, frames.x, frames.segment).logits();
  const Tensor quant = forward(quantized, frames.x, frames.segment).logits();
  return output_kl(full, quant);
}

TraceEstimate hutchinson_trace(const std::function<Tensor(const Tensor&)>& hessian_vector,
                               std::size_t dim, std::size_t probes, Rng& rng) {
  if (probes == 0) throw ArgumentError("hutchinson_trace: need at least one probe");
  double mean = 0.0, m2 = 0.0;
  for (std::size_t k = 0; k < probes; ++k) {
    Tensor v({dim});
    for (auto& x : v.values()) x = rng.rademacher();
    const Tensor hv = hessian_vector(v);
    const double sample = dot(v, hv);
    if (!std::isfinite(sample)) throw NumericError("hutchinson_trace: non-finite probe");
    // Welford update.
    const double delta = sample - mean;
    mean += delta / static_cast<double>(k + 1);
    m2 += delta * (sample - mean);
  }
  TraceEstimate est;
  est.mean = mean;
  est.probes = probes;
  est.std_error = probes > 1 ? std::sqrt(m2 / static_cast<double>(probes - 1) /
                                         static_cast<double>(probes))
                             : 0.0;
  return est;
}

TraceEstimate hutchinson_trace(const Objective& loss, const Tensor& params, std::size_t probes,
                               Rng& rng) {
  return hutchinson_trace([&](const Tensor& v) { return hvp(loss, params, v); }, params.size(),
                          probes, rng);
}

TraceEstimate layer_hessian_trace(const Network& net, std::size_t layer, const Dataset& data,
                                  std::size_t probes, Rng& rng) {
  const Objective obj = layer_objective(net, layer, data);
  return hutchinson_trace(obj, flatten_layer(net.layers[layer]), probes, rng);
}

double curvature_score(double trace, double sq_error) { return std::max(trace, 0.0) * sq_error; }

double curvature_sensitivity(const Network& net, std::size_t layer, int bits,
                             const Dataset& data, std::size_t probes, Rng& rng) {
  if (layer >= net.layers.size()) throw ArgumentError("curvature_sensitivity: layer index out of range");
  const TraceEstimate trace = layer_hessian_trace(net, layer, data, probes, rng);
  const Tensor flat = flatten_layer(net.layers[layer]);
  return curvature_score(trace.mean, optimize_scale(flat.values(), bits).sq_error);
}

SensitivityTable kl_table(const Network& net, const Dataset& frames,
                          std::span<const int> candidate_bits, std::size_t jobs) {
  SensitivityTable table;
  table.metric = SensitivityMetric::kl;
  table.candidate_bits.assign(candidate_bits.begin(), candidate_bits.end());
  table.frames = frames.rows();
  const std::size_t nl = net.layers.size(), nb = candidate_bits.size();
  table.omega.assign(nl, std::vector<double>(nb, 0.0));
  parallel_for(nl * nb, jobs, [&](std::size_t cell) {
    const std::size_t l = cell / nb, k = cell % nb;
    table.omega[l][k] = kl_sensitivity(net, l, candidate_bits[k], frames);
  });
  return table;
}

SensitivityTable hessian_table(const Network& net, const Dataset& data,
                               std::span<const int> candidate_bits, std::size_t probes,
                               const Rng& rng, std::size_t jobs) {
  SensitivityTable table;
  table.metric = SensitivityMetric::hessian;
  table.candidate_bits.assign(candidate_bits.begin(), candidate_bits.end());
  table.frames = data.rows();
  table.probes = probes;
  const std::size_t nl = net.layers.size(), nb = candidate_bits.size();
  table.omega.assign(nl, std::vector<double>(nb, 0.0));
  table.traces.assign(nl, 0.0);
  parallel_for(nl, jobs, [&](std::size_t l) {
    Rng stream = rng.split(l);
    table.traces[l] = std::max(0.0, layer_hessian_trace(net, l, data, probes, stream).mean);
  });
  parallel_for(nl * nb, jobs, [&](std::size_t cell) {
    const std::size_t l = cell / nb, k = cell % nb;
    const Tensor flat = flatten_layer(net.layers[l]);
    table.omega[l][k] =
        curvature_score(table.traces[l], optimize_scale(flat.values(), candidate_bits[k]).sq_error);
  });
  return table;
}

PrecisionAssignment allocate_bits(const SensitivityTable& table, std::span<const std::size_t> params,
                                  double target_avg_bits) {
  table.validate();
  const std::size_t nl = table.layers();
  const auto& cands = table.candidate_bits;
  const std::size_t nb = cands.size();
  if (params.size() != nl) throw ArgumentError("allocate_bits: parameter counts do not match table");
  const int min_bits = *std::min_element(cands.begin(), cands.end());
  if (!(target_avg_bits >= min_bits)) {
    throw ArgumentError("allocate_bits: target " + std::to_string(target_avg_bits) +
                        " is below the smallest candidate bit-width");
  }

  std::uint64_t total_params = 0;
  std::uint64_t unit = 0;
  for (std::size_t l = 0; l < nl; ++l) {
    total_params += params[l];
    for (int b : cands) unit = std::gcd(unit, static_cast<std::uint64_t>(params[l]) * b);
  }
  if (nl == 0) return PrecisionAssignment{};
  if (unit == 0) unit = 1;
  const auto budget_bits = static_cast<std::uint64_t>(
      std::floor(target_avg_bits * static_cast<double>(total_params) + 1e-9));
  std::uint64_t max_bits_total = 0;
  for (std::size_t l = 0; l < nl; ++l) {
    max_bits_total += static_cast<std::uint64_t>(params[l]) * *std::max_element(cands.begin(), cands.end());
  }
  const std::uint64_t capacity = std::min(budget_bits, max_bits_total) / unit;
  if ((capacity + 1) * nl > 200'000'000ULL) {
    throw ArgumentError("allocate_bits: bit budget too fine for the DP grid");
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  const std::size_t width = static_cast<std::size_t>(capacity) + 1;
  std::vector<double> dp(width, kInf), next(width);
  dp[0] = 0.0;
  std::vector<std::vector<std::uint8_t>> choice(nl, std::vector<std::uint8_t>(width, 0));
  for (std::size_t l = 0; l < nl; ++l) {
    std::fill(next.begin(), next.end(), kInf);
    for (std::size_t b = 0; b < width; ++b) {
      if (dp[b] == kInf) continue;
      for (std::size_t k = 0; k < nb; ++k) {
        const std::uint64_t cost = static_cast<std::uint64_t>(params[l]) * cands[k] / unit;
        const std::uint64_t nbud = b + cost;
        if (nbud >= width) continue;
        const double v = dp[b] + table.omega[l][k];
        if (v < next[nbud]) {
          next[nbud] = v;
          choice[l][nbud] = static_cast<std::uint8_t>(k);
        }
      }
    }
    std::swap(dp, next);
  }
  std::size_t best = width;
  for (std::size_t b = 0; b < width; ++b) {
    if (dp[b] == kInf) continue;
    if (best == width || dp[b] < dp[best]) best = b;
  }
  if (best == width) throw ArgumentError("allocate_bits: no feasible assignment");

  PrecisionAssignment out;
  out.bits.assign(nl, 0);
  out.params.assign(params.begin(), params.end());
  std::size_t b = best;
  for (std::size_t l = nl; l-- > 0;) {
    const std::size_t k = choice[l][b];
    out.bits[l] = cands[k];
    b -= static_cast<std::size_t>(static_cast<std::uint64_t>(params[l]) * cands[k] / unit);
  }
  return out;
}

}  // namespace mpq
