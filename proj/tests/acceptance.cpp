// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "mpq/checkpoint.hpp"
#include "mpq/errors.hpp"
#include "mpq/generators.hpp"
#include "mpq/io.hpp"
#include "mpq/model.hpp"
#include "mpq/nas.hpp"
#include "mpq/numeric.hpp"
#include "mpq/quant.hpp"
#include "mpq/sensitivity.hpp"
#include "mpq/size.hpp"

using namespace mpq;
namespace fs = std::filesystem;

namespace {

// Tolerances and trial counts.
constexpr int kQuantizerDraws = 100000;
constexpr int kScaleVectors = 20;
constexpr int kScaleRandomAlphas = 100;
constexpr std::size_t kTraceDim = 50;
constexpr std::size_t kTraceProbes = 10000;
constexpr int kTraceSeeds = 50;
constexpr int kTraceSeedsRequired = 45;
constexpr double kTraceRelTol = 0.05;
constexpr double kHvpRelTol = 1e-3;
constexpr double kHessianStep = 1e-3;
constexpr int kAllocationInstances = 100;
constexpr int kSeeds = 5;
constexpr int kSearchSeedsRequired = 4;
constexpr double kGumbelTemperature = 0.01;
constexpr double kGumbelGap = 10.0;
constexpr int kGumbelSamples = 100;
constexpr int kGumbelWinsRequired = 99;
constexpr double kGumbelSumTol = 1e-12;
constexpr int kCheckpointModels = 1000;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

std::string join(const std::vector<double>& v, const char* f) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + fmt(f, x);
  return s;
}

// Criterion 1.

Outcome size_arithmetic() {
  const auto base = static_cast<std::uint64_t>(fixtures::kBaselineParamsM * 1e6 + 0.5);
  const auto searched = static_cast<std::uint64_t>(fixtures::kSearchedParamsM * 1e6 + 0.5);
  const double mb_base = megabytes(full_precision_bytes(base));
  const double mb_searched = megabytes(full_precision_bytes(searched));
  const double r1 = compression_ratio(fixtures::kSizeA, fixtures::kSizeB);
  const double r2 = compression_ratio(fixtures::kSizeC, fixtures::kSizeD);
  Outcome o;
  o.pass = mb_base == fixtures::kBaselineSizeMB && mb_searched == fixtures::kSearchedSizeMB &&
           r1 == fixtures::kRatioAB && r2 == fixtures::kRatioCD;
  o.detail = fmt("%.1f MB, ", mb_base) + fmt("%.1f MB, ratios ", mb_searched) + fmt("%.1f and ", r1) +
             fmt("%.1f", r2);
  return o;
}

// Criterion 2.

// Every level of the table; ties keep the smaller magnitude, then +alpha.
std::int32_t brute_force_code(double theta, const QuantTable& t, std::int32_t lo, std::int32_t hi) {
  std::int32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::int32_t c = lo; c <= hi; ++c) {
    if (!t.valid_code(c)) continue;
    const double d = std::abs(theta - t.level(c));
    const bool better = d < best_d || (d == best_d && (std::abs(c) < std::abs(best) ||
                                                       (std::abs(c) == std::abs(best) && c > best)));
    if (!found || better) {
      best = c;
      best_d = d;
      found = true;
    }
  }
  return best;
}

Outcome quantizer_oracle() {
  Rng rng(2);
  std::size_t failures = 0;
  for (int bits : kSupportedBits) {
    const std::int32_t m = max_code(bits);
    for (int i = 0; i < kQuantizerDraws; ++i) {
      const double alpha = std::ldexp(1.0, static_cast<int>(rng.uniform_index(9)) - 6);
      const QuantTable t(bits, alpha);
      const double span = alpha * (static_cast<double>(m) + 2.0);
      double theta = rng.uniform(-span, span);
      // One draw in ten sits exactly on a midpoint between levels.
      if (i % 10 == 0) theta = (std::floor(theta / alpha) + 0.5) * alpha;
      if (i % 1000 == 0) theta = 0.0;
      // At 16 bits the scan covers a window around theta plus both ends.
      std::int32_t lo = -m, hi = m;
      if (bits == 16) {
        const double c = std::clamp(theta / alpha, -static_cast<double>(m), static_cast<double>(m));
        lo = static_cast<std::int32_t>(std::floor(c)) - 3;
        hi = static_cast<std::int32_t>(std::floor(c)) + 3;
      }
      std::int32_t expected = brute_force_code(theta, t, lo, hi);
      if (bits == 16) {
        for (std::int32_t end : {-m, m}) {
          const double d = std::abs(theta - t.level(end)), e = std::abs(theta - t.level(expected));
          if (d < e) expected = end;
        }
      }
      const QuantizedValue q = quantize_nearest(theta, t);
      if (q.code != expected || q.value != t.level(expected)) ++failures;
    }
  }
  Outcome o;
  o.pass = failures == 0;
  o.detail = std::to_string(failures) + " mismatches in " + std::to_string(kQuantizerDraws * 5) + " draws";
  return o;
}

// Criterion 3.

Outcome scale_optimality() {
  Rng rng(3);
  int wins = 0, trials = 0;
  for (int bits : kSupportedBits) {
    for (int v = 0; v < kScaleVectors; ++v) {
      std::vector<double> w(64 + rng.uniform_index(192));
      const double scale = rng.uniform(0.01, 3.0);
      for (double& x : w) x = scale * (v % 2 ? rng.normal() : rng.uniform(-1.0, 1.0));
      const ScaleFit fit = optimize_scale(w, bits);
      const double amax = max_abs(std::span<const double>(w));
      const double top = 2.0 * amax;
      bool beaten = false;
      for (int k = 0; k < kScaleRandomAlphas; ++k) {
        const double alpha = top * rng.uniform_open();
        if (quantization_sq_error(w, QuantTable(bits, alpha)) < fit.sq_error) beaten = true;
      }
      wins += !beaten;
      ++trials;
    }
  }
  Outcome o;
  o.pass = wins == trials;
  o.detail = std::to_string(wins) + "/" + std::to_string(trials) + " vectors unbeaten";
  return o;
}

// Criterion 4.

Outcome hutchinson_accuracy() {
  // H = M Mᵀ / d + I with a fixed M; tr(H) from the explicit diagonal.
  Rng mrng(4);
  Tensor m = Tensor::zeros(kTraceDim, kTraceDim);
  for (double& x : m.data()) x = mrng.normal();
  Tensor h = matmul_nt(m, m) * (1.0 / static_cast<double>(kTraceDim)) + Tensor::identity(kTraceDim);
  double trace = 0.0;
  for (std::size_t i = 0; i < kTraceDim; ++i) trace += h(i, i);
  const auto row = [](const Tensor& t) { return Tensor({1, t.size()}, t.data()); };
  const Objective quad{[h, row](const Tensor& t) { return 0.5 * dot(row(t), matmul(row(t), h)); },
                       [h, row](const Tensor& t) { return Tensor({t.size()}, matmul(row(t), h).data()); }};
  Tensor theta({kTraceDim});
  for (double& x : theta.data()) x = mrng.normal();

  int within = 0;
  double worst = 0.0;
  for (int seed = 0; seed < kTraceSeeds; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed));
    const TraceEstimate est = hutchinson_trace(quad, theta, kTraceProbes, rng);
    const double rel = std::abs(est.mean - trace) / trace;
    worst = std::max(worst, rel);
    within += rel <= kTraceRelTol;
  }
  Outcome o;
  o.pass = within >= kTraceSeedsRequired;
  o.detail = std::to_string(within) + "/" + std::to_string(kTraceSeeds) + " seeds within 5%, worst " +
             fmt("%.4f", worst);
  return o;
}

// Criterion 5.

Outcome hvp_correctness() {
  Rng rng(5);
  const std::vector<LayerSpec> specs{{3, 2, Activation::sigmoid, {}}, {2, 1, Activation::identity, {}}};
  const Network net = init_network(2, specs, rng);
  Dataset data;
  data.num_classes = 2;
  data.x = Tensor::zeros(8, 2);
  for (double& x : data.x.data()) x = rng.normal();
  for (int i = 0; i < 8; ++i) data.labels.push_back(static_cast<int>(rng.uniform_index(2)));

  std::vector<std::size_t> sizes;
  Tensor theta0;
  std::vector<double> flat;
  for (const auto& layer : net.layers) {
    const Tensor f = flatten_layer(layer);
    sizes.push_back(f.size());
    flat.insert(flat.end(), f.data().begin(), f.data().end());
  }
  const std::size_t n = flat.size();
  theta0 = Tensor({1, n}, flat);

  auto unpack = [net, sizes](const Tensor& t) {
    Network w = net;
    std::size_t off = 0;
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
      std::vector<double> part(t.data().begin() + static_cast<std::ptrdiff_t>(off),
                               t.data().begin() + static_cast<std::ptrdiff_t>(off + sizes[l]));
      assign_layer(w.layers[l], Tensor({1, sizes[l]}, part));
      off += sizes[l];
    }
    return w;
  };
  const Objective whole{[=](const Tensor& t) { return mean_loss(unpack(t), data); },
                        [=](const Tensor& t) {
                          const Gradients g = backward(unpack(t), data.x, data.labels, 0);
                          std::vector<double> out;
                          for (const auto& lg : g.layers) {
                            const Tensor f = flatten_grad(lg);
                            out.insert(out.end(), f.data().begin(), f.data().end());
                          }
                          Tensor r({1, out.size()}, out);
                          return r * (1.0 / static_cast<double>(data.rows()));
                        }};

  // Hessian from second differences of the loss value alone.
  Tensor hess = Tensor::zeros(n, n);
  auto at = [&](std::size_t i, double si, std::size_t j, double sj) {
    Tensor t = theta0;
    t[i] += si * kHessianStep;
    t[j] += sj * kHessianStep;
    return whole.value(t);
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      hess(i, j) = (at(i, 1, j, 1) - at(i, 1, j, -1) - at(i, -1, j, 1) + at(i, -1, j, -1)) /
                   (4.0 * kHessianStep * kHessianStep);
    }
  }

  double worst_hvp = 0.0, worst_sym = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    Tensor u({1, n}), v({1, n});
    for (double& x : u.data()) x = rng.normal();
    for (double& x : v.data()) x = rng.normal();
    const Tensor hv = hvp(whole, theta0, v), hu = hvp(whole, theta0, u);
    const Tensor expected = matmul(v, hess);
    worst_hvp = std::max(worst_hvp, frobenius_norm(hv - expected) / frobenius_norm(expected));
    const double vhu = dot(v, hu), uhv = dot(u, hv);
    worst_sym = std::max(worst_sym, std::abs(vhu - uhv) / std::max(std::abs(vhu), std::abs(uhv)));
  }
  Outcome o;
  o.pass = n <= 20 && worst_hvp <= kHvpRelTol && worst_sym <= kHvpRelTol;
  o.detail = std::to_string(n) + " parameters, hvp rel " + fmt("%.2e", worst_hvp) + ", symmetry rel " +
             fmt("%.2e", worst_sym);
  return o;
}

// Criterion 6.

std::vector<int> exhaustive_allocation(const SensitivityTable& t, const std::vector<std::size_t>& params,
                                       double target) {
  const std::size_t nl = t.layers(), nb = t.candidate_bits.size();
  double total_params = 0.0;
  for (auto p : params) total_params += static_cast<double>(p);
  double best_omega = std::numeric_limits<double>::infinity();
  std::uint64_t best_bits = 0;
  std::vector<int> best;
  std::size_t combos = 1;
  for (std::size_t l = 0; l < nl; ++l) combos *= nb;
  for (std::size_t c = 0; c < combos; ++c) {
    std::size_t rest = c;
    double omega = 0.0;
    std::uint64_t bits = 0;
    std::vector<int> chosen;
    for (std::size_t l = 0; l < nl; ++l) {
      const std::size_t k = rest % nb;
      rest /= nb;
      omega += t.omega[l][k];
      bits += static_cast<std::uint64_t>(t.candidate_bits[k]) * params[l];
      chosen.push_back(t.candidate_bits[k]);
    }
    if (static_cast<double>(bits) > target * total_params) continue;
    if (omega < best_omega || (omega == best_omega && bits < best_bits)) {
      best_omega = omega;
      best_bits = bits;
      best = chosen;
    }
  }
  return best;
}

Outcome allocation_exactness() {
  Rng rng(6);
  const std::vector<int> pool(kSupportedBits.begin(), kSupportedBits.end());
  int agree = 0;
  for (int trial = 0; trial < kAllocationInstances; ++trial) {
    const std::size_t nl = 1 + rng.uniform_index(4), nb = 1 + rng.uniform_index(4);
    std::vector<int> bits = pool;
    rng.shuffle(bits);
    bits.resize(nb);
    std::sort(bits.begin(), bits.end());
    SensitivityTable t;
    t.candidate_bits = bits;
    t.omega.assign(nl, std::vector<double>(nb));
    for (auto& row : t.omega) {
      double v = rng.uniform(0.5, 2.0);
      for (double& x : row) {
        x = v;
        v *= rng.uniform(0.05, 0.9);
      }
    }
    std::vector<std::size_t> params(nl);
    for (auto& p : params) p = 1 + rng.uniform_index(50);
    const double target = rng.uniform(static_cast<double>(bits.front()), static_cast<double>(bits.back()) + 1.0);
    agree += allocate_bits(t, params, target).bits == exhaustive_allocation(t, params, target);
  }
  Outcome o;
  o.pass = agree == kAllocationInstances;
  o.detail = std::to_string(agree) + "/" + std::to_string(kAllocationInstances) + " instances agree";
  return o;
}

// Criteria 7 and 8 share trained networks.

struct BlobsRun {
  Network net;
  Dataset train;
  Dataset test;
  std::uint64_t seed = 0;
  std::map<std::pair<std::vector<int>, bool>, double> cache;  // (bits, qat) -> held-out accuracy
};

BlobsRun trained_blobs(std::uint64_t seed) {
  BlobsSpec bs;
  bs.classes = 6;
  bs.dim = 16;
  bs.samples = 4000;
  bs.separation = 3.5;
  bs.seed = seed;
  const Dataset d = make_blobs(bs);
  Rng split_rng = Rng(seed).split(1);
  Split sp = split_dataset(d, 0.5, split_rng);
  std::vector<LayerSpec> specs(5, LayerSpec{32, 16, Activation::relu, {}});
  specs.push_back({6, 6, Activation::identity, {}});
  Rng init_rng = Rng(seed).split(2);
  TrainConfig cfg;
  cfg.learning_rate = 0.03;
  cfg.epochs = 30;
  cfg.seed = seed;
  BlobsRun run;
  run.net = train(init_network(bs.dim, specs, init_rng), sp.first, cfg).net;
  run.train = std::move(sp.first);
  run.test = std::move(sp.second);
  run.seed = seed;
  return run;
}

double finetuned_accuracy(BlobsRun& run, const PrecisionAssignment& a, bool qat) {
  const auto key = std::make_pair(a.bits, qat);
  if (auto it = run.cache.find(key); it != run.cache.end()) return it->second;
  TrainConfig ft;
  ft.learning_rate = 0.03;
  ft.epochs = 20;
  ft.seed = run.seed + 100;
  const QuantTrainResult r = qat ? train_qat(run.net, run.train, a, ft) : train_modified_bp(run.net, run.train, a, ft);
  const double acc = accuracy(r.model.dequantize(), run.test);
  run.cache[key] = acc;
  return acc;
}

std::vector<BlobsRun>& blobs_runs() {
  static std::vector<BlobsRun> runs = [] {
    std::vector<BlobsRun> r;
    for (int s = 1; s <= kSeeds; ++s) r.push_back(trained_blobs(static_cast<std::uint64_t>(s)));
    return r;
  }();
  return runs;
}

Outcome mixed_vs_uniform() {
  const std::vector<int> bits(kSupportedBits.begin(), kSupportedBits.end());
  std::vector<double> uni, hes, kl;
  std::string allocations;
  for (BlobsRun& run : blobs_runs()) {
    std::vector<std::size_t> params;
    for (const auto& l : run.net.layers) params.push_back(l.param_count());
    const SensitivityTable th = hessian_table(run.net, run.train, bits, 16, Rng(run.seed).split(3));
    std::vector<std::size_t> frames(256);
    for (std::size_t i = 0; i < frames.size(); ++i) frames[i] = i;
    const SensitivityTable tk = kl_table(run.net, gather(run.train, frames), bits);
    const PrecisionAssignment ah = allocate_bits(th, params, 4.0), ak = allocate_bits(tk, params, 4.0);
    uni.push_back(finetuned_accuracy(run, PrecisionAssignment::uniform(run.net, 4), true));
    hes.push_back(finetuned_accuracy(run, ah, true));
    kl.push_back(finetuned_accuracy(run, ak, true));
    allocations += fmt(" %.2f/", ah.weighted_average()) + fmt("%.2f", ak.weighted_average());
  }
  Outcome o;
  o.pass = median(hes) >= median(uni) && median(kl) >= median(uni);
  o.detail = "median uniform " + fmt("%.4f", median(uni)) + ", hes " + fmt("%.4f", median(hes)) + ", kl " +
             fmt("%.4f", median(kl)) + "; average bits hes/kl" + allocations;
  return o;
}

Outcome qat_vs_bp() {
  bool pass = true;
  std::string detail;
  for (int b : {2, 4}) {
    std::vector<double> qat, bp;
    for (BlobsRun& run : blobs_runs()) {
      const PrecisionAssignment a = PrecisionAssignment::uniform(run.net, b);
      qat.push_back(finetuned_accuracy(run, a, true));
      bp.push_back(finetuned_accuracy(run, a, false));
    }
    pass = pass && median(qat) >= median(bp);
    detail += (detail.empty() ? "" : "; ") + std::to_string(b) + "-bit median qat " + fmt("%.4f", median(qat)) +
              " bp " + fmt("%.4f", median(bp));
  }
  return {pass, detail};
}

// Criterion 9.

Outcome architecture_search() {
  const std::vector<double> etas{0.0, 1e-4, 3e-4, 1e-3, 3e-3};
  const std::vector<std::size_t> choices{4, 8, 16, 32};
  const std::vector<LayerSpec> specs{{32, 32, Activation::relu, {}}, {8, 8, Activation::identity, {}}};
  std::vector<std::vector<double>> avg_r(etas.size());
  int at_least_planted = 0;
  std::size_t planted = 0;
  for (int s = 1; s <= kSeeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    PlantedRankSpec ps;
    ps.seed = seed;
    const PlantedRank pr = make_planted_rank(ps);
    planted = ps.rank;
    for (std::size_t e = 0; e < etas.size(); ++e) {
      Rng rng = Rng(seed).split(7);
      SuperNet sn = make_dim_supernet(ps.input_dim, specs, choices, rng);
      sn.penalty = etas[e];
      SearchSchedule sched;
      sched.stage1_epochs = 20;
      sched.stage2_epochs = 20;
      sched.heldout_fraction = 0.2;
      sched.arch_learning_rate = 0.5;
      sched.seed = seed;
      const SearchResult r = pipelined_search(std::move(sn), pr.data, sched);
      double sum = 0.0, count = 0.0;
      bool all_planted = true;
      for (std::size_t l = 0; l < r.supernet.layers.size(); ++l) {
        if (r.supernet.layers[l].size() < 2) continue;
        const int chosen = r.supernet.layers[l].labels[r.selection[l]];
        sum += chosen;
        count += 1.0;
        all_planted = all_planted && chosen >= static_cast<int>(ps.rank);
      }
      avg_r[e].push_back(sum / count);
      if (e == 0) at_least_planted += all_planted;
    }
  }
  std::vector<double> medians;
  for (const auto& v : avg_r) medians.push_back(median(v));
  const bool monotone = std::is_sorted(medians.rbegin(), medians.rend());
  Outcome o;
  o.pass = at_least_planted >= kSearchSeedsRequired && monotone;
  o.detail = std::to_string(at_least_planted) + "/" + std::to_string(kSeeds) + " seeds select r >= " +
             std::to_string(planted) + " at eta 0; median r over eta grid: " + join(medians, "%g");
  return o;
}

// Criterion 10.

Outcome gumbel_limit() {
  Rng rng(10);
  const std::vector<double> lg{kGumbelGap, 0.0};
  int wins = 0;
  double worst_sum = 0.0;
  for (int i = 0; i < kGumbelSamples; ++i) {
    const std::vector<double> lambda = gumbel_weights(lg, kGumbelTemperature, rng);
    wins += std::max_element(lambda.begin(), lambda.end()) == lambda.begin();
    double s = 0.0;
    for (double x : lambda) s += x;
    worst_sum = std::max(worst_sum, std::abs(s - 1.0));
  }
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> g(1 + rng.uniform_index(8));
    for (double& x : g) x = rng.uniform(-30.0, 30.0);
    const std::vector<double> lambda = gumbel_weights(g, rng.uniform(0.001, 10.0), rng);
    double s = 0.0;
    for (double x : lambda) s += x;
    worst_sum = std::max(worst_sum, std::abs(s - 1.0));
  }
  Outcome o;
  o.pass = wins >= kGumbelWinsRequired && worst_sum <= kGumbelSumTol;
  o.detail = std::to_string(wins) + "/" + std::to_string(kGumbelSamples) + " argmax wins, max |sum - 1| " +
             fmt("%.1e", worst_sum);
  return o;
}

// Criterion 11.

QuantizedNetwork random_model(Rng& rng, bool mixed, int fixed_bits) {
  QuantizedNetwork m;
  const std::size_t layers = 1 + rng.uniform_index(4);
  std::size_t in = 1 + rng.uniform_index(12);
  for (std::size_t l = 0; l < layers; ++l) {
    const int bits = mixed ? kSupportedBits[rng.uniform_index(kSupportedBits.size())] : fixed_bits;
    QuantizedLayer q;
    q.cluster = l;
    q.out_dim = 1 + rng.uniform_index(12);
    q.in_dim = in;
    q.bottleneck = 1 + rng.uniform_index(std::min(q.out_dim, in));
    q.table = QuantTable(bits, rng.uniform(1e-3, 4.0));
    q.codes.resize((q.out_dim + q.in_dim) * q.bottleneck);
    const std::int32_t mc = max_code(bits);
    for (auto& c : q.codes) {
      c = bits == 1 ? (rng.uniform() < 0.5 ? -1 : 1)
                    : static_cast<std::int32_t>(rng.uniform_index(2 * static_cast<std::uint64_t>(mc) + 1)) - mc;
    }
    in = q.out_dim;
    m.layers.push_back(std::move(q));
  }
  return m;
}

bool same_model(const QuantizedNetwork& a, const QuantizedNetwork& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const auto &x = a.layers[l], &y = b.layers[l];
    if (x.out_dim != y.out_dim || x.in_dim != y.in_dim || x.bottleneck != y.bottleneck || x.table != y.table ||
        x.codes != y.codes) {
      return false;
    }
  }
  return true;
}

template <typename E>
bool rejects(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_checkpoint(bytes);
  } catch (const E&) {
    return true;
  } catch (const std::exception&) {
    return false;
  }
  return false;
}

Outcome checkpoint_round_trip() {
  Rng rng(11);
  int exact = 0;
  for (int i = 0; i < kCheckpointModels; ++i) {
    const bool mixed = i % 2 == 1;
    const int bits = kSupportedBits[static_cast<std::size_t>(i / 2) % kSupportedBits.size()];
    if (i % 10 == 9) {
      std::vector<LayerSpec> specs{{1 + rng.uniform_index(8), 1 + rng.uniform_index(4), Activation::relu, {}},
                                   {1 + rng.uniform_index(8), 1, Activation::identity, {}}};
      const std::size_t input = 1 + rng.uniform_index(6);
      specs[0].bottleneck = std::min({specs[0].bottleneck, specs[0].out_dim, input});
      const Network net = init_network(input, specs, rng);
      const Checkpoint c = decode_checkpoint(encode_checkpoint(make_checkpoint(net)));
      const Network back = restore_network(c, specs);
      bool ok = back.layers.size() == net.layers.size();
      for (std::size_t l = 0; ok && l < net.layers.size(); ++l)
        ok = back.layers[l].a == net.layers[l].a && back.layers[l].b == net.layers[l].b;
      exact += ok;
      continue;
    }
    const QuantizedNetwork m = random_model(rng, mixed, bits);
    const auto bytes = encode_checkpoint(make_checkpoint(m));
    const Checkpoint c = decode_checkpoint(bytes);
    exact += same_model(m, c.model) && bytes.size() == model_size_bytes(m) &&
             encode_checkpoint(c) == bytes;
  }

  std::vector<std::string> failed;
  Rng crng(111);
  for (int trial = 0; trial < 20; ++trial) {
    const auto good = encode_checkpoint(make_checkpoint(random_model(crng, true, 4)));
    auto magic = good;
    magic[1] ^= 0x20;
    if (!rejects<MagicMismatchError>(magic)) failed.push_back("magic");
    auto version = good;
    version[4] = static_cast<std::uint8_t>(2 + trial);
    if (!rejects<VersionMismatchError>(version)) failed.push_back("version");
    for (std::size_t cut = 0; cut < good.size(); ++cut) {
      const std::vector<std::uint8_t> part(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(cut));
      if (!rejects<TruncatedError>(part)) {
        failed.push_back("truncation");
        break;
      }
    }
    auto bad_bits = good;
    bad_bits[22] = static_cast<std::uint8_t>(trial % 2 ? 3 : 0);
    if (!rejects<FormatError>(bad_bits)) failed.push_back("bit-width");
    auto trailing = good;
    trailing.push_back(static_cast<std::uint8_t>(trial));
    if (!rejects<FormatError>(trailing)) failed.push_back("trailing bytes");
  }
  // Code -2^(n-1) is outside the symmetric table at every n >= 2.
  for (int bits : {2, 4, 8, 16}) {
    QuantizedNetwork one;
    QuantizedLayer q;
    q.out_dim = q.in_dim = q.bottleneck = 1;
    q.table = QuantTable(bits, 1.0);
    q.codes = {0, 0};
    one.layers.push_back(q);
    auto bytes = encode_checkpoint(make_checkpoint(one));
    const std::size_t codes_at = kHeaderBytes + kLayerOverheadBytes;
    if (bits == 16) {
      bytes[codes_at + 1] = 0x80;
    } else {
      bytes[codes_at] = static_cast<std::uint8_t>(1u << (bits - 1));
    }
    if (!rejects<CodeRangeError>(bytes)) failed.push_back("code range " + std::to_string(bits));
  }
  std::sort(failed.begin(), failed.end());
  failed.erase(std::unique(failed.begin(), failed.end()), failed.end());

  Outcome o;
  o.pass = exact == kCheckpointModels && failed.empty();
  o.detail = std::to_string(exact) + "/" + std::to_string(kCheckpointModels) + " exact round trips";
  if (failed.empty()) {
    o.detail += ", every corruption class rejected";
  } else {
    for (const auto& f : failed) o.detail += ", accepted " + f;
  }
  return o;
}

// Criterion 12.

std::map<std::string, std::string> bundle(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) files[entry.path().filename().string()] = read_file_text(entry.path());
  }
  return files;
}

Outcome determinism(const std::string& cli) {
  const fs::path work = fs::temp_directory_path() / "mpq_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);
  const std::string config = std::string(MPQ_SOURCE_DIR) + "/configs/blobs.ini";
  std::vector<std::map<std::string, std::string>> bundles;
  for (const auto& [name, jobs] : std::vector<std::pair<std::string, int>>{{"a", 1}, {"b", 1}, {"c", 8}}) {
    const std::string cmd = "\"" + cli + "\" pipeline --config \"" + config + "\" --jobs " + std::to_string(jobs) +
                            " --out \"" + (work / name).string() + "\" > /dev/null";
    if (std::system(cmd.c_str()) != 0) return {false, "pipeline run failed: " + cmd};
    bundles.push_back(bundle(work / name));
  }
  const bool has_report = bundles[0].count("report.csv") && bundles[0].count("summary.txt");
  Outcome o;
  o.pass = has_report && bundles[0] == bundles[1] && bundles[0] == bundles[2];
  o.detail = std::to_string(bundles[0].size()) + " files; jobs 1 rerun " +
             (bundles[0] == bundles[1] ? "identical" : "differs") + ", jobs 8 " +
             (bundles[0] == bundles[2] ? "identical" : "differs");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string cli;
  std::vector<int> only;
  app.add_option("--cli", cli, "Path to the mpq executable")->required();
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"size arithmetic", size_arithmetic},
      {"quantizer oracle equivalence", quantizer_oracle},
      {"scale optimality", scale_optimality},
      {"hutchinson accuracy", hutchinson_accuracy},
      {"hvp correctness", hvp_correctness},
      {"allocation exactness", allocation_exactness},
      {"mixed precision vs uniform", mixed_vs_uniform},
      {"qat vs modified bp", qat_vs_bp},
      {"architecture search", architecture_search},
      {"gumbel limit", gumbel_limit},
      {"checkpoint round trip", checkpoint_round_trip},
      {"determinism", [&cli] { return determinism(cli); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %2d %s: %s (%s) [%.1f s]\n", id, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
