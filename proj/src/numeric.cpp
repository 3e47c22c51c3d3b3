// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpq/numeric.hpp"

#include <algorithm>
#include <cmath>

#include "mpq/errors.hpp"

namespace mpq {

namespace {

double finite_value(const Objective& loss, const Tensor& at) {
  const double v = loss.value(at);
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
  return v;
}

}  // namespace

double grad_check(const Objective& loss, const Tensor& params, double eps) {
  if (!(eps > 0.0)) throw ArgumentError("grad_check: eps must be positive");
  finite_value(loss, params);
  const Tensor analytic = loss.gradient(params);
  require_same_shape(analytic, params, "grad_check");
  analytic.require_finite("grad_check gradient");

  Tensor probe = params;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + eps;
    const double up = finite_value(loss, probe);
    probe[i] = saved - eps;
    const double down = finite_value(loss, probe);
    probe[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + 1e-8));
  }
  return worst;
}

double hvp_step(const Tensor& params, const Tensor& v) {
  return 1e-4 * (1.0 + max_abs(params)) / (max_abs(v) + 1e-12);
}

Tensor hvp(const Objective& loss, const Tensor& params, const Tensor& v) {
  require_same_shape(params, v, "hvp");
  const double step = hvp_step(params, v);
  Tensor plus = params, minus = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    plus[i] += step * v[i];
    minus[i] -= step * v[i];
  }
  Tensor result = loss.gradient(plus);
  result -= loss.gradient(minus);
  result *= 1.0 / (2.0 * step);
  if (!result.all_finite()) throw NumericError("hvp: non-finite result");
  return result;
}

}  // namespace mpq
