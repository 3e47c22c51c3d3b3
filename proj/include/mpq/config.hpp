// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mpq/generators.hpp"
#include "mpq/model.hpp"
#include "mpq/nas.hpp"
#include "mpq/sensitivity.hpp"

namespace mpq {

enum class AllocationMethod { uniform, kl, hes, nas };
enum class FinetuneScheme { qat, bp, admm };

std::string_view to_string(AllocationMethod m);
std::string_view to_string(FinetuneScheme s);

struct ModelConfig {
  std::vector<std::size_t> hidden_dims{32, 32, 32, 32, 32};
  std::size_t bottleneck = 16;
  Activation activation = Activation::relu;
  std::vector<int> context;  // first layer only
};

struct SearchConfig {
  bool enabled = false;
  std::vector<std::size_t> choices{4, 8, 16, 32};
  double eta = 0.0;
  std::size_t gumbel_samples = 4;
  std::size_t retrain_epochs = 10;
  SearchSchedule schedule;
};

struct QuantConfig {
  bool enabled = true;
  std::vector<int> candidate_bits{1, 2, 4, 8, 16};
  double target_bits = 4.0;
  AllocationMethod allocation = AllocationMethod::hes;
  FinetuneScheme scheme = FinetuneScheme::qat;
  std::size_t epochs = 10;
  double learning_rate = 0.02;
  std::size_t probes = 16;
  std::size_t kl_frames = 256;
  double nas_eta = 0.0;
  double admm_rho = 0.0;  // <= 0: automatic
  std::size_t pretrain_epochs = 5;
};

/// Whole-experiment configuration. Text form:
///
///   [section]
///   key = value   # comment
///
/// Sections: experiment, data, model, train, search, quant. Lists are
/// comma-separated. Unknown sections or keys are rejected.
struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  DatasetSpec data;
  double test_fraction = 0.2;
  ModelConfig model;
  TrainConfig train;
  SearchConfig search;
  QuantConfig quant;

  void validate() const;
  /// Hidden layers from `model`, then an identity output layer of width classes.
  std::vector<LayerSpec> layer_specs() const;
  std::size_t input_dim() const;
  std::size_t num_classes() const;
  /// Sets every seed that derives from the experiment seed.
  void set_seed(std::uint64_t s);
};

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical text that parses back to the same configuration.
std::string format_config(const ExperimentConfig& cfg);

}  // namespace mpq
