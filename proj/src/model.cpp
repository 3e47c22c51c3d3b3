// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpq/model.hpp"

#include <algorithm>
#include <cmath>

#include "mpq/errors.hpp"

namespace mpq {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "identity";
}

Activation parse_activation(std::string_view name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  throw ArgumentError("unknown activation '" + std::string(name) + "'");
}

Tensor FactoredLayer::weight() const { return matmul(a, b); }

void FactoredLayer::validate() const {
  if (a.rank() != 2 || b.rank() != 2) throw DimensionError("layer factors must be matrices");
  if (a.cols() != b.rows()) {
    throw DimensionError("layer factors disagree on bottleneck: A " + a.shape_string() + ", B " +
                         b.shape_string());
  }
  if (bottleneck() > std::min(out_dim(), in_dim())) {
    throw DimensionError("bottleneck exceeds min(out_dim, in_dim)");
  }
  if (in_dim() % splice_width() != 0) {
    throw DimensionError("layer input width is not a multiple of the context size");
  }
}

std::size_t Network::input_dim() const {
  if (layers.empty()) return 0;
  return layers.front().input_width();
}

std::size_t Network::output_dim() const {
  if (layers.empty()) return 0;
  return layers.back().out_dim();
}

std::size_t Network::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.param_count();
  return n;
}

void Network::validate() const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].validate();
    if (i > 0 && layers[i].input_width() != layers[i - 1].out_dim()) {
      throw DimensionError("layer " + std::to_string(i) + " expects input width " +
                           std::to_string(layers[i].input_width()) + " but previous layer emits " +
                           std::to_string(layers[i - 1].out_dim()));
    }
  }
}

namespace {

Tensor uniform_init(std::size_t rows, std::size_t cols, double variance, Rng& rng) {
  const double limit = std::sqrt(3.0 * variance);
  Tensor t({rows, cols});
  for (auto& v : t.values()) v = rng.uniform(-limit, limit);
  return t;
}

}  // namespace

FactoredLayer init_layer(std::size_t input_width, const LayerSpec& spec, Rng& rng) {
  FactoredLayer layer;
  layer.activation = spec.activation;
  layer.context = spec.context;
  const std::size_t in = input_width * (spec.context.empty() ? 1 : spec.context.size());
  if (spec.out_dim == 0 || spec.bottleneck == 0 || input_width == 0) {
    throw DimensionError("layer dimensions must be positive");
  }
  // With B's rows orthonormal, Var(W) = r Var(A) / in; match He scaling of W.
  const double gain = spec.activation == Activation::relu ? 2.0 : 1.0;
  const auto r = static_cast<double>(spec.bottleneck);
  layer.a = uniform_init(spec.out_dim, spec.bottleneck, gain / r, rng);
  layer.b = uniform_init(spec.bottleneck, in, 2.0 / (r + static_cast<double>(in)), rng);
  layer.validate();
  enforce_semi_orth(layer);
  return layer;
}

Network init_network(std::size_t input_dim, std::span<const LayerSpec> specs, Rng& rng) {
  Network net;
  std::size_t width = input_dim;
  for (const auto& spec : specs) {
    net.layers.push_back(init_layer(width, spec, rng));
    width = spec.out_dim;
  }
  net.validate();
  return net;
}

Tensor splice(const Tensor& h, std::span<const int> context, std::size_t segment) {
  if (context.empty()) return h;
  const std::size_t rows = h.rows(), width = h.cols();
  const std::size_t seg = segment ? segment : rows;
  if (rows % seg != 0) throw DimensionError("splice: rows are not a multiple of the segment");
  Tensor out({rows, width * context.size()});
  for (std::size_t t = 0; t < rows; ++t) {
    const auto start = static_cast<long>((t / seg) * seg);
    const auto last = start + static_cast<long>(seg) - 1;
    for (std::size_t k = 0; k < context.size(); ++k) {
      const long src = std::clamp(static_cast<long>(t) + context[k], start, last);
      auto from = h.row(static_cast<std::size_t>(src));
      std::copy(from.begin(), from.end(), &out(t, k * width));
    }
  }
  return out;
}

Tensor unsplice(const Tensor& g, std::span<const int> context, std::size_t segment,
                std::size_t width) {
  if (context.empty()) return g;
  const std::size_t rows = g.rows();
  const std::size_t seg = segment ? segment : rows;
  Tensor out({rows, width});
  for (std::size_t t = 0; t < rows; ++t) {
    const auto start = static_cast<long>((t / seg) * seg);
    const auto last = start + static_cast<long>(seg) - 1;
    for (std::size_t k = 0; k < context.size(); ++k) {
      const long src = std::clamp(static_cast<long>(t) + context[k], start, last);
      const double* from = &g(t, k * width);
      double* to = &out(static_cast<std::size_t>(src), 0);
      for (std::size_t j = 0; j < width; ++j) to[j] += from[j];
    }
  }
  return out;
}

Tensor apply_activation(Activation act, Tensor z) {
  switch (act) {
    case Activation::identity: break;
    case Activation::relu:
      for (auto& v : z.values()) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::sigmoid:
      for (auto& v : z.values()) v = 1.0 / (1.0 + std::exp(-v));
      break;
  }
  return z;
}

void activation_backward(Activation act, const Tensor& output, Tensor& grad) {
  require_same_shape(output, grad, "activation_backward");
  switch (act) {
    case Activation::identity: break;
    case Activation::relu:
      for (std::size_t i = 0; i < grad.size(); ++i)
        if (!(output[i] > 0.0)) grad[i] = 0.0;
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= output[i] * (1.0 - output[i]);
      break;
  }
}

ForwardResult forward(const Network& net, const Tensor& x, std::size_t segment) {
  if (net.layers.empty()) throw DimensionError("forward: network has no layers");
  if (x.rank() != 2 || x.cols() != net.input_dim()) {
    throw DimensionError("forward: input " + x.shape_string() + " does not match network input width " +
                         std::to_string(net.input_dim()));
  }
  ForwardResult r;
  r.inputs.reserve(net.layers.size());
  r.projections.reserve(net.layers.size());
  r.outputs.reserve(net.layers.size());
  const Tensor* h = &x;
  for (const auto& layer : net.layers) {
    r.inputs.push_back(splice(*h, layer.context, segment));
    r.projections.push_back(matmul_nt(r.inputs.back(), layer.b));
    r.outputs.push_back(apply_activation(layer.activation, matmul_nt(r.projections.back(), layer.a)));
    h = &r.outputs.back();
  }
  return r;
}

double cross_entropy_sum(const Tensor& logits, std::span<const int> labels) {
  if (logits.rows() != labels.size()) throw DimensionError("cross_entropy: label count mismatch");
  const std::size_t classes = logits.cols();
  double total = 0.0;
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    const int y = labels[t];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ArgumentError("cross_entropy: label " + std::to_string(y) + " out of range");
    }
    auto row = logits.row(t);
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - m);
    total += m + std::log(s) - row[static_cast<std::size_t>(y)];
  }
  if (!std::isfinite(total)) throw NumericError("cross_entropy: non-finite loss");
  return total;
}

Tensor cross_entropy_grad(const Tensor& logits, std::span<const int> labels) {
  if (logits.rows() != labels.size()) throw DimensionError("cross_entropy: label count mismatch");
  Tensor g = logits;
  const std::size_t classes = logits.cols();
  for (std::size_t t = 0; t < g.rows(); ++t) {
    const int y = labels[t];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ArgumentError("cross_entropy: label " + std::to_string(y) + " out of range");
    }
    auto row = g.row(t);
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (auto& v : row) {
      v = std::exp(v - m);
      s += v;
    }
    for (auto& v : row) v /= s;
    row[static_cast<std::size_t>(y)] -= 1.0;
  }
  return g;
}

std::vector<LayerGrad> backward_from(const Network& net, const ForwardResult& fwd,
                                     Tensor logits_grad, std::size_t segment, Tensor* input_grad) {
  const std::size_t n = net.layers.size();
  std::vector<LayerGrad> grads(n);
  Tensor g = std::move(logits_grad);
  for (std::size_t li = n; li-- > 0;) {
    const auto& layer = net.layers[li];
    activation_backward(layer.activation, fwd.outputs[li], g);
    grads[li].a = matmul_tn(g, fwd.projections[li]);
    const Tensor dproj = matmul(g, layer.a);
    grads[li].b = matmul_tn(dproj, fwd.inputs[li]);
    if (li > 0 || input_grad != nullptr) {
      g = unsplice(matmul(dproj, layer.b), layer.context, segment, layer.input_width());
    }
  }
  if (input_grad != nullptr) *input_grad = std::move(g);
  return grads;
}

Gradients backward(const Network& net, const Tensor& x, std::span<const int> labels,
                   std::size_t segment) {
  const ForwardResult fwd = forward(net, x, segment);
  Gradients out;
  out.loss = cross_entropy_sum(fwd.logits(), labels);
  out.layers = backward_from(net, fwd, cross_entropy_grad(fwd.logits(), labels), segment);
  return out;
}

void apply_update(Network& net, const std::vector<LayerGrad>& grads, double scale) {
  if (grads.size() != net.layers.size()) throw DimensionError("apply_update: layer count mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto& layer = net.layers[i];
    require_same_shape(layer.a, grads[i].a, "apply_update");
    require_same_shape(layer.b, grads[i].b, "apply_update");
    for (std::size_t k = 0; k < layer.a.size(); ++k) layer.a[k] -= scale * grads[i].a[k];
    for (std::size_t k = 0; k < layer.b.size(); ++k) layer.b[k] -= scale * grads[i].b[k];
  }
}

double semi_orth_residual(const Tensor& b) {
  Tensor p = matmul_nt(b, b);
  for (std::size_t i = 0; i < p.rows(); ++i) p(i, i) -= 1.0;
  return frobenius_norm(p);
}

namespace {

void require_full_rank(const Tensor& gram) {
  // Cholesky of B·Bᵀ; a vanishing pivot means B has dependent rows.
  const std::size_t n = gram.rows();
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, gram(i, i));
  Tensor l({n, n});
  for (std::size_t j = 0; j < n; ++j) {
    double d = gram(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 1e-10 * scale)) throw ConditioningError("semi_orth_step: B is rank deficient");
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = gram(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
}

}  // namespace

Tensor semi_orth_step(const Tensor& b) {
  Tensor p = matmul_nt(b, b);
  require_full_rank(p);
  for (std::size_t i = 0; i < p.rows(); ++i) p(i, i) -= 1.0;
  const double residual = frobenius_norm(p);
  const Tensor direction = matmul(p, b);
  for (double c = 0.5; c > 1e-9; c *= 0.5) {
    Tensor candidate = b;
    for (std::size_t k = 0; k < candidate.size(); ++k) candidate[k] -= c * direction[k];
    if (semi_orth_residual(candidate) < residual) return candidate;
  }
  if (residual > 1e-6) throw NumericError("semi_orth_step: no decreasing step found");
  return b;
}

void semi_orth_step(FactoredLayer& layer) { layer.b = semi_orth_step(layer.b); }

void enforce_semi_orth(FactoredLayer& layer, double tol, int max_steps) {
  for (int i = 0; i < max_steps && semi_orth_residual(layer.b) > tol; ++i) semi_orth_step(layer);
  if (semi_orth_residual(layer.b) > tol) {
    throw NumericError("enforce_semi_orth: residual above tolerance after max steps");
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || batch_size == 0 || semi_orth_interval == 0) {
    throw ArgumentError("train config: learning rate must be >= 0, batch size and interval positive");
  }
}

double mean_loss(const Network& net, const Dataset& data) {
  const ForwardResult fwd = forward(net, data.x, data.segment);
  return cross_entropy_sum(fwd.logits(), data.labels) / static_cast<double>(data.rows());
}

std::vector<int> predict(const Network& net, const Tensor& x, std::size_t segment) {
  const ForwardResult fwd = forward(net, x, segment);
  const Tensor& z = fwd.logits();
  std::vector<int> out(z.rows());
  for (std::size_t t = 0; t < z.rows(); ++t) {
    auto row = z.row(t);
    out[t] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

double accuracy(const Network& net, const Dataset& data) {
  const auto pred = predict(net, data.x, data.segment);
  std::size_t hit = 0;
  for (std::size_t t = 0; t < pred.size(); ++t) hit += pred[t] == data.labels[t];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

TrainResult train(Network net, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  net.validate();
  TrainResult result;
  Rng rng(cfg.seed);
  std::size_t step = 0;
  try {
    result.loss_curve.push_back(mean_loss(net, data));
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      for (const auto& units : make_batches(data.units(), cfg.batch_size, rng)) {
        const Dataset batch = gather(data, units);
        const Gradients g = backward(net, batch.x, batch.labels, batch.segment);
        apply_update(net, g.layers, cfg.learning_rate / static_cast<double>(batch.rows()));
        if (++step % cfg.semi_orth_interval == 0) {
          for (auto& layer : net.layers) enforce_semi_orth(layer);
        }
      }
      result.loss_curve.push_back(mean_loss(net, data));
    }
  } catch (const TrainingError&) {
    throw;
  } catch (const NumericError& e) {
    throw TrainingError(std::string("training diverged: ") + e.what());
  }
  result.net = std::move(net);
  return result;
}

Tensor flatten_layer(const FactoredLayer& layer) {
  std::vector<double> v(layer.a.data());
  v.insert(v.end(), layer.b.data().begin(), layer.b.data().end());
  return Tensor::vector(std::move(v));
}

void assign_layer(FactoredLayer& layer, const Tensor& flat) {
  if (flat.size() != layer.param_count()) throw DimensionError("assign_layer: size mismatch");
  std::copy(flat.data().begin(), flat.data().begin() + static_cast<std::ptrdiff_t>(layer.a.size()),
            layer.a.data().begin());
  std::copy(flat.data().begin() + static_cast<std::ptrdiff_t>(layer.a.size()), flat.data().end(),
            layer.b.data().begin());
}

Tensor flatten_grad(const LayerGrad& g) {
  std::vector<double> v(g.a.data());
  v.insert(v.end(), g.b.data().begin(), g.b.data().end());
  return Tensor::vector(std::move(v));
}

Objective layer_objective(const Network& net, std::size_t layer, const Dataset& data) {
  if (layer >= net.layers.size()) throw ArgumentError("layer_objective: layer index out of range");
  const double inv_rows = 1.0 / static_cast<double>(data.rows());
  Objective obj;
  obj.value = [net, layer, data, inv_rows](const Tensor& flat) {
    Network local = net;
    assign_layer(local.layers[layer], flat);
    return mean_loss(local, data);
  };
  obj.gradient = [net, layer, data, inv_rows](const Tensor& flat) {
    Network local = net;
    assign_layer(local.layers[layer], flat);
    Tensor g = flatten_grad(backward(local, data.x, data.labels, data.segment).layers[layer]);
    g *= inv_rows;
    return g;
  };
  return obj;
}

}  // namespace mpq
