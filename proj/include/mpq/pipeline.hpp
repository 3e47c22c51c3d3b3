// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mpq/config.hpp"
#include "mpq/dataset.hpp"
#include "mpq/model.hpp"
#include "mpq/quant.hpp"

namespace mpq {

enum class Stage { train, search_arch, sensitivity, allocate, quantize, finetune, report };

std::string_view to_string(Stage s);
Stage parse_stage(std::string_view name);

struct PipelineOptions {
  std::filesystem::path out = "out";
  std::size_t jobs = 1;
  /// Reuse artifacts of completed stages found in `out`.
  bool resume = false;
  /// With resume, stages from this one onward are recomputed anyway.
  std::optional<Stage> recompute_from;
  Stage stop_after = Stage::report;
  std::function<void(std::string_view)> log;
};

struct ExperimentData {
  Dataset train;
  Dataset test;
};

/// Generated dataset split into train and test parts.
ExperimentData make_experiment_data(const ExperimentConfig& cfg);

struct PipelineResult {
  Network network;  // full-precision network after the architecture stage
  std::optional<QuantizedNetwork> final_model;
  std::vector<Stage> computed;
  std::vector<Stage> reused;
  double full_precision_accuracy = 0.0;
  double final_accuracy = 0.0;
};

/// train -> search-arch -> sensitivity -> allocate -> quantize -> finetune ->
/// report. Each stage persists its artifacts in options.out; a failing stage
/// rethrows its error with the stage name prepended.
PipelineResult run_pipeline(const ExperimentConfig& cfg, const PipelineOptions& options);

}  // namespace mpq
