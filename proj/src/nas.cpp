// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpq/nas.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mpq/errors.hpp"
#include "mpq/parallel.hpp"

namespace mpq {

std::vector<double> sample_gumbel(std::size_t n, Rng& rng) {
  std::vector<double> g(n);
  for (auto& v : g) v = -std::log(-std::log(rng.uniform_open()));
  return g;
}

std::vector<double> gumbel_softmax(std::span<const double> log_gamma, std::span<const double> noise,
                                   double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ArgumentError("gumbel_softmax: temperature must be positive");
  }
  if (log_gamma.empty()) throw DimensionError("gumbel_softmax: no candidates");
  if (noise.size() != log_gamma.size()) throw DimensionError("gumbel_softmax: noise size mismatch");
  std::vector<double> y(log_gamma.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = (log_gamma[i] + noise[i]) / temperature;
    if (!std::isfinite(y[i])) throw NumericError("gumbel_softmax: non-finite logit");
  }
  const double m = *std::max_element(y.begin(), y.end());
  double s = 0.0;
  for (auto& v : y) {
    v = std::exp(v - m);
    s += v;
  }
  for (auto& v : y) v /= s;
  return y;
}

std::vector<double> gumbel_weights(std::span<const double> log_gamma, double temperature, Rng& rng) {
  if (!(temperature > 0.0)) throw ArgumentError("gumbel_weights: temperature must be positive");
  const auto g = sample_gumbel(log_gamma.size(), rng);
  return gumbel_softmax(log_gamma, g, temperature);
}

std::vector<double> gumbel_softmax_backward(std::span<const double> lambda,
                                            std::span<const double> dlambda, double temperature) {
  if (lambda.size() != dlambda.size()) throw DimensionError("gumbel_softmax_backward: size mismatch");
  double inner = 0.0;
  for (std::size_t i = 0; i < lambda.size(); ++i) inner += lambda[i] * dlambda[i];
  std::vector<double> out(lambda.size());
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    out[i] = lambda[i] * (dlambda[i] - inner) / temperature;
  }
  return out;
}

std::size_t SuperNet::input_dim() const {
  if (layers.empty()) throw DimensionError("SuperNet: no layers");
  return layers.front().candidates.front().input_width();
}

void SuperNet::validate() const {
  if (layers.empty()) throw DimensionError("SuperNet: no layers");
  if (!(temperature > 0.0)) throw ArgumentError("SuperNet: temperature must be positive");
  if (gumbel_samples == 0) throw ArgumentError("SuperNet: gumbel sample count must be positive");
  if (!(penalty >= 0.0) || !std::isfinite(penalty)) {
    throw ArgumentError("SuperNet: penalty must be non-negative");
  }
  std::size_t width = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& sl = layers[l];
    const std::size_t n = sl.candidates.size();
    if (n == 0) throw DimensionError("SuperNet: layer " + std::to_string(l) + " has no candidates");
    if (sl.log_gamma.size() != n || sl.complexity.size() != n || sl.labels.size() != n) {
      throw DimensionError("SuperNet: layer " + std::to_string(l) + " parameter count mismatch");
    }
    const auto& first = sl.candidates.front();
    for (const auto& c : sl.candidates) {
      c.validate();
      if (c.out_dim() != first.out_dim() || c.in_dim() != first.in_dim() ||
          c.context != first.context || c.activation != first.activation) {
        throw DimensionError("SuperNet: candidates of layer " + std::to_string(l) +
                             " disagree in shape");
      }
    }
    if (l > 0 && first.input_width() != width) {
      throw DimensionError("SuperNet: layer " + std::to_string(l) + " input width mismatch");
    }
    width = first.out_dim();
  }
}

namespace {

void check_lambda(const SuperNet& sn, const ArchWeights& lambda) {
  if (lambda.size() != sn.layers.size()) throw DimensionError("supernet: lambda layer count mismatch");
  for (std::size_t l = 0; l < lambda.size(); ++l) {
    if (lambda[l].size() != sn.layers[l].size()) {
      throw DimensionError("supernet: lambda size mismatch at layer " + std::to_string(l));
    }
  }
}

}  // namespace

SupernetForward supernet_forward_full(const SuperNet& sn, const Tensor& x, const ArchWeights& lambda,
                                      std::size_t segment) {
  check_lambda(sn, lambda);
  if (x.cols() != sn.input_dim()) throw DimensionError("supernet_forward: input width mismatch");
  SupernetForward f;
  const std::size_t L = sn.layers.size();
  f.inputs.reserve(L);
  f.projections.resize(L);
  f.candidate_outputs.resize(L);
  f.outputs.reserve(L);
  const Tensor* h = &x;
  for (std::size_t l = 0; l < L; ++l) {
    const auto& sl = sn.layers[l];
    const auto& first = sl.candidates.front();
    f.inputs.push_back(first.context.empty() ? *h : splice(*h, first.context, segment));
    const Tensor& in = f.inputs.back();
    Tensor mix({in.rows(), first.out_dim()});
    f.projections[l].resize(sl.size());
    f.candidate_outputs[l].resize(sl.size());
    for (std::size_t i = 0; i < sl.size(); ++i) {
      const double w = lambda[l][i];
      if (w == 0.0) continue;
      const auto& c = sl.candidates[i];
      f.projections[l][i] = matmul_nt(in, c.b);
      f.candidate_outputs[l][i] = apply_activation(c.activation, matmul_nt(f.projections[l][i], c.a));
      const Tensor& out = f.candidate_outputs[l][i];
      if (w == 1.0) {
        mix += out;
      } else {
        for (std::size_t k = 0; k < mix.size(); ++k) mix[k] += w * out[k];
      }
    }
    f.outputs.push_back(std::move(mix));
    h = &f.outputs.back();
  }
  return f;
}

Tensor supernet_forward(const SuperNet& sn, const Tensor& x, const ArchWeights& lambda,
                        std::size_t segment) {
  return supernet_forward_full(sn, x, lambda, segment).logits();
}

SupernetGrad supernet_lambda_grad(const SuperNet& sn, const Dataset& batch, const ArchWeights& lambda) {
  const auto f = supernet_forward_full(sn, batch.x, lambda, batch.segment);
  const double rows = static_cast<double>(batch.rows());
  SupernetGrad out;
  out.loss = cross_entropy_sum(f.logits(), batch.labels) / rows;
  Tensor g = cross_entropy_grad(f.logits(), batch.labels);
  g *= 1.0 / rows;
  const std::size_t L = sn.layers.size();
  out.dlambda.resize(L);
  for (std::size_t l = L; l-- > 0;) {
    const auto& sl = sn.layers[l];
    out.dlambda[l].assign(sl.size(), 0.0);
    Tensor dinput;
    if (l > 0) dinput = Tensor({f.inputs[l].rows(), f.inputs[l].cols()});
    for (std::size_t i = 0; i < sl.size(); ++i) {
      const double w = lambda[l][i];
      if (w == 0.0) continue;
      const Tensor& out_i = f.candidate_outputs[l][i];
      out.dlambda[l][i] = dot(g, out_i);
      if (l == 0) continue;
      Tensor gi = g;
      gi *= w;
      activation_backward(sl.candidates[i].activation, out_i, gi);
      dinput += matmul(matmul(gi, sl.candidates[i].a), sl.candidates[i].b);
    }
    if (l > 0) {
      const auto& first = sl.candidates.front();
      g = unsplice(dinput, first.context, batch.segment, first.input_width());
    }
  }
  return out;
}

double penalized_loss(double base_loss, const ArchWeights& lambda,
                      const std::vector<std::vector<double>>& complexity, double eta) {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ArgumentError("penalized_loss: eta must be >= 0");
  if (lambda.size() != complexity.size()) throw DimensionError("penalized_loss: layer count mismatch");
  double pen = 0.0;
  for (std::size_t l = 0; l < lambda.size(); ++l) {
    if (lambda[l].size() != complexity[l].size()) {
      throw DimensionError("penalized_loss: candidate count mismatch");
    }
    for (std::size_t i = 0; i < lambda[l].size(); ++i) pen += lambda[l][i] * complexity[l][i];
  }
  const double out = base_loss + eta * pen;
  if (!std::isfinite(out)) throw NumericError("penalized_loss: non-finite value");
  return out;
}

void SearchSchedule::validate() const {
  if (!(heldout_fraction > 0.0 && heldout_fraction < 0.5)) {
    throw ArgumentError("SearchSchedule: held-out fraction must be in (0, 0.5)");
  }
  if (!(temperature_start > 0.0) || !(temperature_end > 0.0) || temperature_end > temperature_start) {
    throw ArgumentError("SearchSchedule: temperatures must be positive and non-increasing");
  }
  if (!(weight_learning_rate >= 0.0) || !(arch_learning_rate >= 0.0)) {
    throw ArgumentError("SearchSchedule: learning rates must be non-negative");
  }
  if (batch_size == 0) throw ArgumentError("SearchSchedule: batch size must be positive");
  if (patience == 0) throw ArgumentError("SearchSchedule: patience must be positive");
  if (semi_orth_interval == 0) throw ArgumentError("SearchSchedule: semi-orth interval must be positive");
}

double SearchSchedule::temperature_at(std::size_t epoch) const {
  if (stage2_epochs <= 1) return temperature_start;
  const double t = static_cast<double>(std::min(epoch, stage2_epochs - 1)) /
                   static_cast<double>(stage2_epochs - 1);
  return temperature_start * std::pow(temperature_end / temperature_start, t);
}

std::vector<std::size_t> select_architecture(const ArchWeights& log_gamma) {
  std::vector<std::size_t> sel(log_gamma.size());
  for (std::size_t l = 0; l < log_gamma.size(); ++l) {
    if (log_gamma[l].empty()) throw DimensionError("select_architecture: empty layer");
    sel[l] = static_cast<std::size_t>(
        std::max_element(log_gamma[l].begin(), log_gamma[l].end()) - log_gamma[l].begin());
  }
  return sel;
}

namespace {

ArchWeights log_gammas(const SuperNet& sn) {
  ArchWeights out;
  for (const auto& sl : sn.layers) out.push_back(sl.log_gamma);
  return out;
}

void train_stage1(SuperNet& sn, const Dataset& train, const SearchSchedule& sched, Rng rng,
                  std::vector<double>& curve) {
  const std::size_t batch_units =
      train.segment ? std::max<std::size_t>(1, sched.batch_size / train.segment) : sched.batch_size;
  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < sched.stage1_epochs; ++epoch) {
    double total = 0.0;
    double rows = 0.0;
    for (const auto& idx : make_batches(train.units(), batch_units, rng)) {
      const Dataset batch = gather(train, idx);
      std::vector<std::size_t> path(sn.layers.size());
      Network net;
      for (std::size_t l = 0; l < sn.layers.size(); ++l) {
        path[l] = static_cast<std::size_t>(rng.uniform_index(sn.layers[l].size()));
        net.layers.push_back(sn.layers[l].candidates[path[l]]);
      }
      const Gradients g = backward(net, batch.x, batch.labels, batch.segment);
      if (!std::isfinite(g.loss)) throw TrainingError("pipelined_search: stage 1 diverged");
      total += g.loss;
      rows += static_cast<double>(batch.rows());
      apply_update(net, g.layers, sched.weight_learning_rate / static_cast<double>(batch.rows()));
      for (std::size_t l = 0; l < sn.layers.size(); ++l) {
        sn.layers[l].candidates[path[l]] = std::move(net.layers[l]);
      }
      if (++step % sched.semi_orth_interval == 0) {
        for (std::size_t l = 0; l < sn.layers.size(); ++l) {
          enforce_semi_orth(sn.layers[l].candidates[path[l]]);
        }
      }
    }
    const double mean = total / rows;
    curve.push_back(mean);
    if (mean < best - 1e-9) {
      best = mean;
      stale = 0;
    } else if (++stale >= sched.patience) {
      break;
    }
  }
  if (sched.stage1_epochs == 0) return;
  // Leave every candidate satisfying the constraint before weights freeze.
  for (auto& sl : sn.layers) {
    for (auto& c : sl.candidates) enforce_semi_orth(c);
  }
}

void search_stage2(SuperNet& sn, const Dataset& heldout, const SearchSchedule& sched, Rng rng,
                   SearchResult& result) {
  const std::size_t L = sn.layers.size();
  std::vector<std::vector<double>> complexity;
  for (const auto& sl : sn.layers) complexity.push_back(sl.complexity);
  const std::size_t batch_units = heldout.segment
                                      ? std::max<std::size_t>(1, sched.batch_size / heldout.segment)
                                      : sched.batch_size;
  const double J = static_cast<double>(sn.gumbel_samples);
  for (std::size_t epoch = 0; epoch < sched.stage2_epochs; ++epoch) {
    sn.temperature = sched.temperature_at(epoch);
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& idx : make_batches(heldout.units(), batch_units, rng)) {
      const Dataset batch = gather(heldout, idx);
      ArchWeights step(L);
      for (std::size_t l = 0; l < L; ++l) step[l].assign(sn.layers[l].size(), 0.0);
      for (std::size_t j = 0; j < sn.gumbel_samples; ++j) {
        ArchWeights lambda(L);
        for (std::size_t l = 0; l < L; ++l) {
          lambda[l] = gumbel_weights(sn.layers[l].log_gamma, sn.temperature, rng);
        }
        SupernetGrad g = supernet_lambda_grad(sn, batch, lambda);
        total += penalized_loss(g.loss, lambda, complexity, sn.penalty);
        ++count;
        for (std::size_t l = 0; l < L; ++l) {
          for (std::size_t i = 0; i < lambda[l].size(); ++i) {
            g.dlambda[l][i] += sn.penalty * complexity[l][i];
          }
          const auto dg = gumbel_softmax_backward(lambda[l], g.dlambda[l], sn.temperature);
          for (std::size_t i = 0; i < dg.size(); ++i) step[l][i] += dg[i] / J;
        }
      }
      for (std::size_t l = 0; l < L; ++l) {
        if (sn.layers[l].size() == 1) continue;
        for (std::size_t i = 0; i < step[l].size(); ++i) {
          sn.layers[l].log_gamma[i] -= sched.arch_learning_rate * step[l][i];
        }
      }
      result.trajectory.push_back(log_gammas(sn));
    }
    result.stage2_loss.push_back(total / static_cast<double>(count));
  }
}

}  // namespace

SearchResult pipelined_search(SuperNet sn, const Dataset& data, const SearchSchedule& sched) {
  sched.validate();
  sn.validate();
  data.validate();
  if (data.input_dim() != sn.input_dim()) throw DimensionError("pipelined_search: input width mismatch");
  Rng root(sched.seed);
  Rng split_rng = root.split(1);
  const Split parts = split_dataset(data, sched.heldout_fraction, split_rng);
  if (parts.first.units() == 0 || parts.second.units() == 0) {
    throw ArgumentError("pipelined_search: degenerate held-out split");
  }
  SearchResult result;
  train_stage1(sn, parts.first, sched, root.split(2), result.stage1_loss);
  search_stage2(sn, parts.second, sched, root.split(3), result);
  result.selection = select_architecture(log_gammas(sn));
  result.supernet = std::move(sn);
  return result;
}

SuperNet make_dim_supernet(std::size_t input_dim, std::span<const LayerSpec> specs,
                           std::span<const std::size_t> choices, Rng& rng) {
  if (specs.empty()) throw DimensionError("make_dim_supernet: no layers");
  SuperNet sn;
  std::size_t width = input_dim;
  for (std::size_t l = 0; l < specs.size(); ++l) {
    const auto& spec = specs[l];
    SuperLayer sl;
    const std::size_t in = width * (spec.context.empty() ? 1 : spec.context.size());
    auto add = [&](std::size_t r) {
      LayerSpec s = spec;
      s.bottleneck = r;
      sl.candidates.push_back(init_layer(width, s, rng));
      sl.complexity.push_back(static_cast<double>(sl.candidates.back().param_count()));
      sl.labels.push_back(static_cast<int>(r));
    };
    if (l + 1 < specs.size()) {
      for (std::size_t r : choices) {
        if (r >= 1 && r <= std::min(spec.out_dim, in)) add(r);
      }
    }
    if (sl.candidates.empty()) add(spec.bottleneck);
    sl.log_gamma.assign(sl.candidates.size(), 0.0);
    sn.layers.push_back(std::move(sl));
    width = spec.out_dim;
  }
  sn.validate();
  return sn;
}

Network extract_network(const SuperNet& sn, std::span<const std::size_t> selection) {
  if (selection.size() != sn.layers.size()) throw DimensionError("extract_network: selection size");
  Network net;
  for (std::size_t l = 0; l < selection.size(); ++l) {
    if (selection[l] >= sn.layers[l].size()) throw ArgumentError("extract_network: index out of range");
    net.layers.push_back(sn.layers[l].candidates[selection[l]]);
  }
  net.validate();
  return net;
}

std::vector<QuantizedNetwork> pretrain_precision_candidates(const Network& net, const Dataset& data,
                                                            std::span<const int> candidate_bits,
                                                            const TrainConfig& cfg, double rho,
                                                            std::size_t jobs) {
  std::vector<QuantizedNetwork> out(candidate_bits.size());
  parallel_for(candidate_bits.size(), jobs, [&](std::size_t k) {
    TrainConfig c = cfg;
    c.seed = Rng(cfg.seed).split(static_cast<std::uint64_t>(candidate_bits[k])).next_u64();
    out[k] = train_admm(net, data, PrecisionAssignment::uniform(net, candidate_bits[k]), c, rho).model;
  });
  return out;
}

PrecisionNasResult precision_nas(const std::vector<QuantizedNetwork>& pretrained,
                                 std::span<const int> candidate_bits, const Dataset& data,
                                 double eta, const SearchSchedule& sched,
                                 std::size_t gumbel_samples) {
  if (candidate_bits.empty()) throw ArgumentError("precision_nas: no candidate bit-widths");
  if (pretrained.size() != candidate_bits.size()) {
    throw ArgumentError("precision_nas: missing pretrained candidate");
  }
  const std::size_t L = pretrained.front().layers.size();
  SuperNet sn;
  sn.penalty = eta;
  sn.gumbel_samples = gumbel_samples;
  for (std::size_t l = 0; l < L; ++l) {
    SuperLayer sl;
    for (std::size_t k = 0; k < candidate_bits.size(); ++k) {
      if (pretrained[k].layers.size() != L) {
        throw ArgumentError("precision_nas: missing pretrained candidate for " +
                            std::to_string(candidate_bits[k]) + " bits at layer " + std::to_string(l));
      }
      const auto& q = pretrained[k].layers[l];
      if (q.table.bits() != candidate_bits[k]) {
        throw ArgumentError("precision_nas: pretrained candidate bit-width mismatch at layer " +
                            std::to_string(l));
      }
      sl.candidates.push_back(q.dequantize());
      sl.complexity.push_back(static_cast<double>(candidate_bits[k]) *
                              static_cast<double>(q.param_count()));
      sl.labels.push_back(candidate_bits[k]);
    }
    sl.log_gamma.assign(sl.candidates.size(), 0.0);
    sn.layers.push_back(std::move(sl));
  }
  SearchSchedule s = sched;
  s.stage1_epochs = 0;
  PrecisionNasResult out;
  out.search = pipelined_search(std::move(sn), data, s);
  std::vector<int> bits(L);
  for (std::size_t l = 0; l < L; ++l) bits[l] = candidate_bits[out.search.selection[l]];
  out.assignment = PrecisionAssignment::for_network(pretrained.front().dequantize(), bits);
  return out;
}

}  // namespace mpq
