// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mpq/errors.hpp"
#include "mpq/quant.hpp"

namespace mpq {

std::vector<LayerGrad> ste_gradient(const Network& shadow, std::span<const QuantTable> tables,
                                    const Dataset& batch, double* loss) {
  const Network quantized = quantize_with_tables(shadow, tables).dequantize();
  Gradients g = backward(quantized, batch.x, batch.labels, batch.segment);
  if (loss != nullptr) *loss = g.loss;
  return std::move(g.layers);
}

namespace {

std::vector<double> alphas_of(std::span<const QuantTable> tables) {
  std::vector<double> out;
  for (const auto& t : tables) out.push_back(t.alpha());
  return out;
}

// Coordinate search over layers: each scale is replaced by the candidate
// around its L2-optimal value with the lowest training loss.
std::vector<QuantTable> refit_scales(const Network& shadow, const PrecisionAssignment& assignment,
                                     std::vector<QuantTable> tables, const Dataset& data) {
  static constexpr double kFactors[] = {0.7, 0.85, 1.0, 1.15, 1.3};
  const std::vector<QuantTable> fitted = quantize_model(shadow, assignment).tables();
  QuantizedNetwork model = quantize_with_tables(shadow, tables);
  for (std::size_t l = 0; l < tables.size(); ++l) {
    std::vector<double> candidates{tables[l].alpha()};
    for (double f : kFactors) candidates.push_back(fitted[l].alpha() * f);
    double best_loss = std::numeric_limits<double>::infinity();
    QuantTable best = tables[l];
    QuantizedLayer best_layer = model.layers[l];
    for (double a : candidates) {
      const QuantTable t(tables[l].bits(), a);
      model.layers[l] = quantize_layer(shadow.layers[l], t, l);
      const double loss = mean_loss(model.dequantize(), data);
      if (loss < best_loss) {
        best_loss = loss;
        best = t;
        best_layer = model.layers[l];
      }
    }
    tables[l] = best;
    model.layers[l] = std::move(best_layer);
  }
  return tables;
}

QuantTrainResult run_ste(const Network& net, const Dataset& data,
                         const PrecisionAssignment& assignment, const TrainConfig& cfg,
                         bool reoptimize_scales) {
  cfg.validate();
  data.validate();
  QuantTrainResult result;
  Network shadow = net;
  try {
    QuantizedNetwork current = quantize_model(shadow, assignment);
    std::vector<QuantTable> tables = current.tables();
    double best_loss = mean_loss(current.dequantize(), data);
    result.loss_curve.push_back(best_loss);
    result.model = current;
    result.shadow = shadow;

    Rng rng(cfg.seed);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      result.alpha_history.push_back(alphas_of(tables));
      for (const auto& units : make_batches(data.units(), cfg.batch_size, rng)) {
        const Dataset batch = gather(data, units);
        apply_update(shadow, ste_gradient(shadow, tables, batch),
                     cfg.learning_rate / static_cast<double>(batch.rows()));
      }
      if (reoptimize_scales) tables = refit_scales(shadow, assignment, tables, data);
      current = quantize_with_tables(shadow, tables);
      const double loss = mean_loss(current.dequantize(), data);
      if (!std::isfinite(loss)) throw TrainingError("quantized training diverged");
      result.loss_curve.push_back(loss);
      if (!reoptimize_scales) {
        result.model = current;
        result.shadow = shadow;
      } else if (loss < best_loss) {
        best_loss = loss;
        result.model = current;
        result.shadow = shadow;
      }
    }
  } catch (const TrainingError&) {
    throw;
  } catch (const NumericError& e) {
    throw TrainingError(std::string("quantized training diverged: ") + e.what());
  }
  return result;
}

}  // namespace

QuantTrainResult train_modified_bp(const Network& net, const Dataset& data,
                                   const PrecisionAssignment& assignment, const TrainConfig& cfg) {
  return run_ste(net, data, assignment, cfg, false);
}

QuantTrainResult train_qat(const Network& net, const Dataset& data,
                           const PrecisionAssignment& assignment, const TrainConfig& cfg) {
  return run_ste(net, data, assignment, cfg, true);
}

AdmmRun admm_quantize(std::vector<Tensor> theta, std::span<const int> bits,
                      const ClusterGradient& loss_gradient, const AdmmOptions& options) {
  if (theta.size() != bits.size()) throw ArgumentError("admm: cluster/bit count mismatch");
  if (!(options.rho > 0.0)) throw ArgumentError("admm: rho must be positive");
  if (!(options.learning_rate > 0.0)) throw ArgumentError("admm: learning rate must be positive");
  const std::size_t n = theta.size();

  AdmmRun run;
  auto& st = run.state;
  st.rho = options.rho;
  // Steps beyond lr * rho = 1 overshoot the proximal term.
  const double rho_cap = std::max(options.rho, 1.0 / options.learning_rate);

  auto project = [&](std::size_t c, const Tensor& v) {
    ScaleFit fit = optimize_scale(v.values(), bits[c]);
    Tensor q(v.shape());
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = fit.table.level(fit.codes[i]);
    return std::pair{std::move(q), fit.table};
  };

  for (std::size_t c = 0; c < n; ++c) {
    st.dual.emplace_back(theta[c].shape());
    auto [q, table] = project(c, theta[c]);
    st.auxiliary.push_back(std::move(q));
    st.tables.push_back(table);
  }

  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < options.iterations; ++it) {
    for (std::size_t s = 0; s < options.inner_steps; ++s) {
      const std::vector<Tensor> grads = loss_gradient(theta);
      if (grads.size() != n) throw DimensionError("admm: gradient cluster count mismatch");
      for (std::size_t c = 0; c < n; ++c) {
        require_same_shape(grads[c], theta[c], "admm gradient");
        for (std::size_t i = 0; i < theta[c].size(); ++i) {
          const double prox = theta[c][i] - st.auxiliary[c][i] + st.dual[c][i];
          theta[c][i] -= options.learning_rate * (grads[c][i] + st.rho * prox);
        }
        if (!theta[c].all_finite()) throw TrainingError("admm: theta diverged");
      }
    }
    double sq = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      auto [q, table] = project(c, theta[c] + st.dual[c]);
      st.auxiliary[c] = std::move(q);
      st.tables[c] = table;
      for (std::size_t i = 0; i < theta[c].size(); ++i) {
        const double r = theta[c][i] - st.auxiliary[c][i];
        st.dual[c][i] += r;
        sq += r * r;
      }
    }
    const double residual = std::sqrt(sq);
    run.history.push_back({residual, st.rho});
    if (residual > 1e-9 && residual > 0.95 * previous && st.rho < rho_cap) {
      const double grown = std::min(st.rho * options.rho_growth, rho_cap);
      for (auto& u : st.dual) u *= st.rho / grown;
      st.rho = grown;
    }
    previous = residual;
  }
  run.theta = std::move(theta);
  return run;
}

double default_admm_rho(const Network& net, const Dataset& data) {
  const Gradients g = backward(net, data.x, data.labels, data.segment);
  double grad_sum = 0.0, theta_sum = 0.0;
  std::size_t count = 0;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    for (double v : g.layers[l].a.values()) grad_sum += std::abs(v);
    for (double v : g.layers[l].b.values()) grad_sum += std::abs(v);
    for (double v : net.layers[l].a.values()) theta_sum += std::abs(v);
    for (double v : net.layers[l].b.values()) theta_sum += std::abs(v);
    count += net.layers[l].param_count();
  }
  grad_sum /= static_cast<double>(data.rows());
  if (theta_sum == 0.0 || count == 0) return 1e-3;
  const double rho = 0.01 * (grad_sum / static_cast<double>(count)) /
                     (theta_sum / static_cast<double>(count));
  return rho > 0.0 ? rho : 1e-3;
}

AdmmResult train_admm(const Network& net, const Dataset& data,
                      const PrecisionAssignment& assignment, const TrainConfig& cfg, double rho) {
  cfg.validate();
  data.validate();
  assignment.validate();
  if (assignment.size() != net.layers.size()) throw ArgumentError("train_admm: assignment size mismatch");
  const std::size_t inner_steps = (data.units() + cfg.batch_size - 1) / cfg.batch_size;
  if (rho <= 0.0) {
    rho = std::max(default_admm_rho(net, data),
                   1.0 / (cfg.learning_rate * static_cast<double>(inner_steps)));
  }

  std::vector<Tensor> theta;
  for (const auto& layer : net.layers) theta.push_back(flatten_layer(layer));

  Rng rng(cfg.seed);
  std::vector<std::vector<std::size_t>> batches;
  std::size_t cursor = 0;
  Network work = net;
  ClusterGradient grad = [&](const std::vector<Tensor>& t) {
    if (cursor == batches.size()) {
      batches = make_batches(data.units(), cfg.batch_size, rng);
      cursor = 0;
    }
    const Dataset batch = gather(data, batches[cursor++]);
    for (std::size_t l = 0; l < work.layers.size(); ++l) assign_layer(work.layers[l], t[l]);
    const Gradients g = backward(work, batch.x, batch.labels, batch.segment);
    std::vector<Tensor> out;
    const double inv = 1.0 / static_cast<double>(batch.rows());
    for (const auto& lg : g.layers) out.push_back(flatten_grad(lg) * inv);
    return out;
  };

  AdmmOptions options;
  options.rho = rho;
  options.learning_rate = cfg.learning_rate;
  options.iterations = cfg.epochs;
  options.inner_steps = inner_steps;

  AdmmRun run;
  try {
    run = admm_quantize(std::move(theta), assignment.bits, grad, options);
  } catch (const TrainingError&) {
    throw;
  } catch (const NumericError& e) {
    throw TrainingError(std::string("admm diverged: ") + e.what());
  }

  AdmmResult result;
  result.shadow = net;
  for (std::size_t l = 0; l < net.layers.size(); ++l) assign_layer(result.shadow.layers[l], run.theta[l]);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    QuantizedLayer q = quantize_layer(result.shadow.layers[l], run.state.tables[l], l);
    for (std::size_t i = 0; i < q.codes.size(); ++i) {
      q.codes[i] = static_cast<std::int32_t>(
          std::llround(run.state.auxiliary[l][i] / run.state.tables[l].alpha()));
    }
    result.model.layers.push_back(std::move(q));
  }
  result.state = std::move(run.state);
  result.history = std::move(run.history);
  return result;
}

}  // namespace mpq
