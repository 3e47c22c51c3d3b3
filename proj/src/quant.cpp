// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpq/quant.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <numeric>
#include <queue>
#include <string>

#include "mpq/errors.hpp"

namespace mpq {

bool is_supported_bits(int bits) {
  return std::find(kSupportedBits.begin(), kSupportedBits.end(), bits) != kSupportedBits.end();
}

std::int32_t max_code(int bits) {
  if (!is_supported_bits(bits)) {
    throw ArgumentError("unsupported bit-width " + std::to_string(bits));
  }
  return bits == 1 ? 1 : (std::int32_t{1} << (bits - 1)) - 1;
}

QuantTable::QuantTable(int bits, double alpha) : bits_(bits), alpha_(alpha) {
  if (!is_supported_bits(bits)) throw ArgumentError("unsupported bit-width " + std::to_string(bits));
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ArgumentError("table scale must be positive");
}

bool QuantTable::valid_code(std::int32_t code) const {
  if (bits_ == 1) return code == 1 || code == -1;
  return code >= -max_code() && code <= max_code();
}

std::vector<double> QuantTable::levels() const {
  std::vector<double> out;
  if (bits_ == 1) return {level(-1), level(1)};
  const std::int32_t m = max_code();
  out.reserve(static_cast<std::size_t>(2 * m + 1));
  for (std::int32_t c = -m; c <= m; ++c) out.push_back(level(c));
  return out;
}

QuantTable build_table(int bits, double alpha) { return QuantTable(bits, alpha); }

QuantizedValue quantize_nearest(double theta, const QuantTable& table) {
  if (!std::isfinite(theta)) throw NumericError("quantize_nearest: non-finite input");
  const bool negative = theta < 0.0;
  if (table.bits() == 1) {
    const std::int32_t code = negative ? -1 : 1;
    return {table.level(code), code};
  }
  const double mag = std::abs(theta);
  const std::int32_t m = table.max_code();
  const double q = mag / table.alpha();
  const double base = std::min(std::floor(q), static_cast<double>(m));
  const auto k0 = static_cast<std::int32_t>(base);
  // floor(q) can be off by one after rounding in the division; check the
  // neighbours and keep the first (smallest magnitude) minimum.
  std::int32_t best = -1;
  double best_dist = 0.0;
  for (std::int32_t k = std::max(0, k0 - 1); k <= std::min(m, k0 + 1); ++k) {
    const double d = std::abs(mag - table.level(k));
    if (best < 0 || d < best_dist) {
      best = k;
      best_dist = d;
    }
  }
  const std::int32_t code = negative ? -best : best;
  return {table.level(code), code};
}

double quantization_sq_error(std::span<const double> weights, const QuantTable& table) {
  double err = 0.0;
  for (double w : weights) {
    const double d = w - quantize_nearest(w, table).value;
    err += d * d;
  }
  return err;
}

namespace {

ScaleFit fit_with_alpha(std::span<const double> weights, int bits, double alpha) {
  ScaleFit fit{QuantTable(bits, alpha), {}, 0.0, false};
  fit.codes.reserve(weights.size());
  for (double w : weights) {
    const auto q = quantize_nearest(w, fit.table);
    fit.codes.push_back(q.code);
    const double d = w - q.value;
    fit.sq_error += d * d;
  }
  return fit;
}

// Largest alpha for which every weight is exactly code * alpha with a valid
// code, if one exists among a_min / k (k = 1..limit) and its nearby doubles.
std::optional<double> exact_grid_scale(std::span<const double> weights, int bits) {
  double a_min = std::numeric_limits<double>::infinity();
  double a_max = 0.0;
  for (double w : weights) {
    const double a = std::abs(w);
    if (a > 0.0) a_min = std::min(a_min, a);
    a_max = std::max(a_max, a);
  }
  if (a_max == 0.0) return std::nullopt;
  const std::int32_t m = max_code(bits);
  if (bits == 1 && a_min != a_max) return std::nullopt;

  auto reproduces = [&](double alpha) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) return false;
    for (double w : weights) {
      const double c = std::nearbyint(w / alpha);
      if (std::abs(c) > m) return false;
      if (bits == 1 && c == 0.0) return false;
      if (c * alpha != w) return false;
    }
    return true;
  };

  const std::int32_t limit = std::min<std::int32_t>(m, 1024);
  for (std::int32_t k = 1; k <= limit; ++k) {
    const double base = a_min / k;
    double candidates[5] = {base, std::nextafter(base, 0.0), std::nextafter(base, 1e308), 0.0, 0.0};
    candidates[3] = std::nextafter(candidates[1], 0.0);
    candidates[4] = std::nextafter(candidates[2], 1e308);
    // Prefer the largest reproducing value among the neighbours.
    std::sort(std::begin(candidates), std::end(candidates), std::greater<>());
    for (double c : candidates)
      if (reproduces(c)) return c;
  }
  return std::nullopt;
}

// Global minimum of E(alpha) = sum_i min_k (|w_i| - k alpha)^2. E is a
// quadratic in alpha between consecutive breakpoints |w_i| / (k + 1/2); sweep
// the breakpoints from large alpha to small, updating S1 = sum |w| k and
// S2 = sum k^2, and minimize each piece in closed form.
double sweep_scale(std::span<const double> weights, std::int32_t m) {
  struct Event {
    double alpha;
    std::size_t index;
    std::int32_t next_code;
    bool operator<(const Event& o) const {
      if (alpha != o.alpha) return alpha < o.alpha;
      return index > o.index;
    }
  };
  std::priority_queue<Event> events;
  std::vector<double> mags(weights.size());
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    mags[i] = std::abs(weights[i]);
    sum_sq += mags[i] * mags[i];
    if (mags[i] > 0.0) events.push({mags[i] / 0.5, i, 1});
  }
  double s1 = 0.0, s2 = 0.0;
  double best_alpha = 0.0, best_err = std::numeric_limits<double>::infinity();
  while (!events.empty()) {
    const Event e = events.top();
    events.pop();
    s1 += mags[e.index];
    s2 += 2.0 * e.next_code - 1.0;
    if (e.next_code < m) {
      events.push({mags[e.index] / (e.next_code + 0.5), e.index, e.next_code + 1});
    }
    const double hi = e.alpha;
    const double lo = events.empty() ? 0.0 : events.top().alpha;
    double alpha = std::clamp(s1 / s2, lo, hi);
    if (!(alpha > 0.0)) continue;
    const double err = sum_sq - 2.0 * alpha * s1 + alpha * alpha * s2;
    if (err < best_err) {
      best_err = err;
      best_alpha = alpha;
    }
  }
  return best_alpha;
}

double alternating_scale(std::span<const double> weights, int bits, double alpha) {
  double best_alpha = alpha;
  double best_err = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 200; ++iter) {
    const QuantTable table(bits, alpha);
    double s1 = 0.0, s2 = 0.0, err = 0.0;
    for (double w : weights) {
      const auto q = quantize_nearest(w, table);
      s1 += std::abs(w) * std::abs(static_cast<double>(q.code));
      s2 += static_cast<double>(q.code) * q.code;
      err += (w - q.value) * (w - q.value);
    }
    if (err < best_err) {
      best_err = err;
      best_alpha = alpha;
    }
    if (s2 == 0.0) break;
    const double next = s1 / s2;
    if (!(next > 0.0) || next == alpha) break;
    alpha = next;
  }
  return best_alpha;
}

constexpr double kSweepBudget = 4.0e6;

}  // namespace

ScaleFit optimize_scale(std::span<const double> weights, int bits) {
  if (weights.empty()) throw ArgumentError("optimize_scale: empty weights");
  const std::int32_t m = max_code(bits);
  double a_max = 0.0, a_sum = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w)) throw NumericError("optimize_scale: non-finite weight");
    a_max = std::max(a_max, std::abs(w));
    a_sum += std::abs(w);
  }
  if (a_max == 0.0) {
    const double alpha = bits == 1 ? std::numeric_limits<double>::min() : 1.0;
    ScaleFit fit = fit_with_alpha(weights, bits, alpha);
    fit.degenerate = true;
    return fit;
  }
  if (auto exact = exact_grid_scale(weights, bits)) return fit_with_alpha(weights, bits, *exact);

  const double initial = a_max / m;
  double alpha = initial;
  if (bits == 1) {
    alpha = a_sum / static_cast<double>(weights.size());
  } else if (static_cast<double>(weights.size()) * m <= kSweepBudget) {
    alpha = sweep_scale(weights, m);
  } else {
    alpha = alternating_scale(weights, bits, initial);
  }
  ScaleFit fit = fit_with_alpha(weights, bits, alpha);
  if (bits != 1 && alpha != initial) {
    ScaleFit base = fit_with_alpha(weights, bits, initial);
    if (base.sq_error < fit.sq_error) return base;
  }
  return fit;
}

FactoredLayer QuantizedLayer::dequantize() const {
  validate();
  FactoredLayer layer;
  layer.activation = activation;
  layer.context = context;
  layer.a = Tensor({out_dim, bottleneck});
  layer.b = Tensor({bottleneck, in_dim});
  const std::size_t na = layer.a.size();
  for (std::size_t i = 0; i < na; ++i) layer.a[i] = table.level(codes[i]);
  for (std::size_t i = 0; i < layer.b.size(); ++i) layer.b[i] = table.level(codes[na + i]);
  return layer;
}

void QuantizedLayer::validate() const {
  if (codes.size() != out_dim * bottleneck + bottleneck * in_dim) {
    throw DimensionError("quantized layer: code count does not match dimensions");
  }
  for (auto c : codes) {
    if (!table.valid_code(c)) throw ArgumentError("quantized layer: code out of table range");
  }
}

Network QuantizedNetwork::dequantize() const {
  Network net;
  net.layers.reserve(layers.size());
  for (const auto& l : layers) net.layers.push_back(l.dequantize());
  return net;
}

PrecisionAssignment QuantizedNetwork::assignment() const {
  PrecisionAssignment a;
  for (const auto& l : layers) {
    a.bits.push_back(l.table.bits());
    a.params.push_back(l.param_count());
  }
  return a;
}

std::vector<QuantTable> QuantizedNetwork::tables() const {
  std::vector<QuantTable> out;
  for (const auto& l : layers) out.push_back(l.table);
  return out;
}

namespace {

QuantizedLayer shell_of(const FactoredLayer& layer, const QuantTable& table, std::size_t cluster) {
  QuantizedLayer q;
  q.cluster = cluster;
  q.out_dim = layer.out_dim();
  q.in_dim = layer.in_dim();
  q.bottleneck = layer.bottleneck();
  q.activation = layer.activation;
  q.context = layer.context;
  q.table = table;
  return q;
}

}  // namespace

QuantizedLayer quantize_layer(const FactoredLayer& layer, int bits, std::size_t cluster) {
  const Tensor flat = flatten_layer(layer);
  ScaleFit fit = optimize_scale(flat.values(), bits);
  QuantizedLayer q = shell_of(layer, fit.table, cluster);
  q.codes = std::move(fit.codes);
  return q;
}

QuantizedLayer quantize_layer(const FactoredLayer& layer, const QuantTable& table,
                              std::size_t cluster) {
  QuantizedLayer q = shell_of(layer, table, cluster);
  const Tensor flat = flatten_layer(layer);
  q.codes.reserve(flat.size());
  for (double w : flat.values()) q.codes.push_back(quantize_nearest(w, table).code);
  return q;
}

QuantizedNetwork quantize_model(const Network& net, const PrecisionAssignment& assignment) {
  assignment.validate();
  if (assignment.size() != net.layers.size()) {
    throw ArgumentError("quantize_model: assignment covers " + std::to_string(assignment.size()) +
                        " layers, network has " + std::to_string(net.layers.size()));
  }
  QuantizedNetwork q;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    q.layers.push_back(quantize_layer(net.layers[l], assignment.bits[l], l));
  }
  return q;
}

QuantizedNetwork quantize_with_tables(const Network& net, std::span<const QuantTable> tables) {
  if (tables.size() != net.layers.size()) throw ArgumentError("quantize_with_tables: table count mismatch");
  QuantizedNetwork q;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    q.layers.push_back(quantize_layer(net.layers[l], tables[l], l));
  }
  return q;
}

}  // namespace mpq
