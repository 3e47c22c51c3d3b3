// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end for the compression pipeline.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "mpq/checkpoint.hpp"
#include "mpq/config.hpp"
#include "mpq/errors.hpp"
#include "mpq/io.hpp"
#include "mpq/pipeline.hpp"
#include "mpq/size.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string out = "out";
  bool resume = false;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config, "Experiment configuration file")->required();
  cmd->add_option("--seed", a.seed, "Override the experiment seed");
  cmd->add_option("--jobs", a.jobs, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out", a.out, "Output directory");
  cmd->add_flag("--resume", a.resume, "Reuse artifacts of completed stages");
}

int run_stage(const CommonArgs& a, std::optional<mpq::Stage> stage) {
  mpq::ExperimentConfig cfg = mpq::load_config(a.config);
  if (a.seed) cfg.set_seed(*a.seed);
  mpq::PipelineOptions opt;
  opt.out = a.out;
  opt.jobs = a.jobs;
  opt.log = [](std::string_view m) { std::cerr << m << '\n'; };
  if (stage) {
    // Single stage: earlier stages come from the output directory when present.
    opt.stop_after = *stage;
    opt.resume = true;
    if (!a.resume) opt.recompute_from = *stage;
  } else {
    opt.resume = a.resume;
  }
  const auto r = mpq::run_pipeline(cfg, opt);
  std::printf("full-precision accuracy %.4f\n", r.full_precision_accuracy);
  if (r.final_model && opt.stop_after == mpq::Stage::report) {
    std::printf("quantized accuracy %.4f\n", r.final_accuracy);
  }
  return 0;
}

int inspect(const std::string& file) {
  const auto bytes = mpq::read_file_bytes(file);
  const auto ckpt = mpq::decode_checkpoint(bytes);
  std::printf("version %u\nlayers %zu\n", static_cast<unsigned>(ckpt.version), ckpt.model.layers.size());
  for (std::size_t i = 0; i < ckpt.model.layers.size(); ++i) {
    const auto& l = ckpt.model.layers[i];
    std::printf("layer %zu: out %zu in %zu r %zu bits %d alpha %.17g params %zu\n", i, l.out_dim, l.in_dim,
                l.bottleneck, l.table.bits(), l.table.alpha(), l.param_count());
  }
  std::printf("shadow %s\n", ckpt.has_shadow() ? "yes" : "no");
  std::printf("declared bytes %llu\nfile bytes %zu\n", static_cast<unsigned long long>(mpq::encoded_size(ckpt)),
              bytes.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixed-precision quantization and bottleneck search for factored networks"};
  app.require_subcommand(1);
  CommonArgs args;
  std::optional<mpq::Stage> stage;
  std::string ckpt_path;

  const std::pair<const char*, mpq::Stage> stages[] = {
      {"train", mpq::Stage::train},         {"search-arch", mpq::Stage::search_arch},
      {"sensitivity", mpq::Stage::sensitivity}, {"allocate", mpq::Stage::allocate},
      {"quantize", mpq::Stage::quantize},   {"finetune", mpq::Stage::finetune},
      {"report", mpq::Stage::report},
  };
  for (const auto& [name, st] : stages) {
    auto* cmd = app.add_subcommand(name, std::string("Run the pipeline through the ") + name + " stage");
    add_common(cmd, args);
    cmd->callback([&stage, st = st] { stage = st; });
  }
  auto* pipeline = app.add_subcommand("pipeline", "Run every stage");
  add_common(pipeline, args);
  auto* inspect_cmd = app.add_subcommand("inspect-ckpt", "Describe a checkpoint file");
  inspect_cmd->add_option("path", ckpt_path, "Checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (inspect_cmd->parsed()) return inspect(ckpt_path);
    return run_stage(args, pipeline->parsed() ? std::nullopt : stage);
  } catch (const mpq::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const mpq::ArgumentError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const mpq::DimensionError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const mpq::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const mpq::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
