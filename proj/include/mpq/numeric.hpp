// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>

#include "mpq/tensor.hpp"

namespace mpq {

/// A scalar function of a parameter tensor together with its analytic gradient.
struct Objective {
  std::function<double(const Tensor&)> value;
  std::function<Tensor(const Tensor&)> gradient;
};

/// Max over coordinates of |analytic - central difference| / (|analytic| + 1e-8).
/// Throws NumericError if the loss is non-finite at any probe point.
double grad_check(const Objective& loss, const Tensor& params, double eps = 1e-5);

/// Step used by hvp: 1e-4 * (1 + |theta|_inf) / (|v|_inf + 1e-12).
double hvp_step(const Tensor& params, const Tensor& v);

/// Hessian-vector product by central difference of gradients,
/// (g(theta + e v) - g(theta - e v)) / (2 e).
Tensor hvp(const Objective& loss, const Tensor& params, const Tensor& v);

}  // namespace mpq
