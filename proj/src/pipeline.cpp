// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpq/pipeline.hpp"

#include <json.hpp>

#include "mpq/checkpoint.hpp"
#include "mpq/errors.hpp"
#include "mpq/io.hpp"
#include "mpq/nas.hpp"
#include "mpq/report.hpp"
#include "mpq/sensitivity.hpp"
#include "mpq/size.hpp"

namespace mpq {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::train: return "train";
    case Stage::search_arch: return "search-arch";
    case Stage::sensitivity: return "sensitivity";
    case Stage::allocate: return "allocate";
    case Stage::quantize: return "quantize";
    case Stage::finetune: return "finetune";
    case Stage::report: return "report";
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  for (auto s : {Stage::train, Stage::search_arch, Stage::sensitivity, Stage::allocate, Stage::quantize,
                 Stage::finetune, Stage::report}) {
    if (name == to_string(s)) return s;
  }
  throw ArgumentError("unknown stage '" + std::string(name) + "'");
}

ExperimentData make_experiment_data(const ExperimentConfig& cfg) {
  const Dataset full = gen_dataset(cfg.data);
  Rng rng = Rng(cfg.seed).split(100);
  Split parts = split_dataset(full, cfg.test_fraction, rng);
  return {std::move(parts.first), std::move(parts.second)};
}

namespace {

// Stream identifiers for seeds derived from the experiment seed.
constexpr std::uint64_t kInitStream = 200;
constexpr std::uint64_t kSearchInitStream = 300;
constexpr std::uint64_t kRetrainStream = 301;
constexpr std::uint64_t kHessianStream = 400;
constexpr std::uint64_t kFinetuneStream = 600;

[[noreturn]] void rethrow_in_stage(Stage stage) {
  const std::string p = "stage " + std::string(to_string(stage)) + ": ";
  try {
    throw;
  } catch (const ConditioningError& e) {
    throw ConditioningError(p + e.what());
  } catch (const TrainingError& e) {
    throw TrainingError(p + e.what());
  } catch (const NumericError& e) {
    throw NumericError(p + e.what());
  } catch (const MagicMismatchError& e) {
    throw MagicMismatchError(p + e.what());
  } catch (const VersionMismatchError& e) {
    throw VersionMismatchError(p + e.what());
  } catch (const TruncatedError& e) {
    throw TruncatedError(p + e.what());
  } catch (const CodeRangeError& e) {
    throw CodeRangeError(p + e.what());
  } catch (const FormatError& e) {
    throw FormatError(p + e.what());
  } catch (const IoError& e) {
    throw IoError(p + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(p + e.what());
  } catch (const ArgumentError& e) {
    throw ArgumentError(p + e.what());
  } catch (const DimensionError& e) {
    throw DimensionError(p + e.what());
  } catch (const Error& e) {
    throw Error(p + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(p + "malformed artifact: " + e.what());
  }
}

json table_to_json(const SensitivityTable& t) {
  return json{{"metric", std::string(to_string(t.metric))},
              {"candidate_bits", t.candidate_bits},
              {"omega", t.omega},
              {"frames", t.frames},
              {"probes", t.probes},
              {"traces", t.traces}};
}

SensitivityTable table_from_json(const json& j) {
  SensitivityTable t;
  t.metric = j.at("metric").get<std::string>() == "kl" ? SensitivityMetric::kl : SensitivityMetric::hessian;
  t.candidate_bits = j.at("candidate_bits").get<std::vector<int>>();
  t.omega = j.at("omega").get<std::vector<std::vector<double>>>();
  t.frames = j.at("frames").get<std::size_t>();
  t.probes = j.at("probes").get<std::size_t>();
  t.traces = j.at("traces").get<std::vector<double>>();
  t.validate();
  return t;
}

json read_json(const fs::path& p) {
  return json::parse(read_file_text(p));
}

void write_json(const fs::path& p, const json& j) { write_file_atomic(p, j.dump(1) + "\n"); }

class Runner {
 public:
  Runner(const ExperimentConfig& cfg, const PipelineOptions& opt) : cfg_(cfg), opt_(opt) {}

  PipelineResult run() {
    prepare_output();
    data_ = make_experiment_data(cfg_);
    specs_ = cfg_.layer_specs();
    step(Stage::train, [&] { return stage_train(); });
    if (done(Stage::train)) return finish();
    step(Stage::search_arch, [&] { return stage_search(); });
    if (done(Stage::search_arch)) return finish();
    if (cfg_.quant.enabled) {
      step(Stage::sensitivity, [&] { return stage_sensitivity(); });
      if (done(Stage::sensitivity)) return finish();
      step(Stage::allocate, [&] { return stage_allocate(); });
      if (done(Stage::allocate)) return finish();
      step(Stage::quantize, [&] { return stage_quantize(); });
      if (done(Stage::quantize)) return finish();
      step(Stage::finetune, [&] { return stage_finetune(); });
      if (done(Stage::finetune)) return finish();
    }
    step(Stage::report, [&] { return stage_report(); });
    return finish();
  }

 private:
  fs::path path(const char* name) const { return opt_.out / name; }

  void log(const std::string& m) const {
    if (opt_.log) opt_.log(m);
  }

  bool done(Stage s) const { return opt_.stop_after == s; }

  void prepare_output() {
    std::error_code ec;
    fs::create_directories(opt_.out, ec);
    if (ec) throw IoError("cannot create output directory " + opt_.out.string());
    const std::string text = format_config(cfg_);
    const fs::path p = path("config.ini");
    if (opt_.resume && fs::exists(p) && read_file_text(p) != text) {
      throw ConfigError("cannot resume: configuration differs from " + p.string());
    }
    write_file_atomic(p, text);
  }

  // fn returns true when it reused persisted artifacts.
  template <typename Fn>
  void step(Stage s, Fn&& fn) {
    bool reused = false;
    try {
      reused = fn();
    } catch (...) {
      rethrow_in_stage(s);
    }
    (reused ? result_.reused : result_.computed).push_back(s);
    log(std::string(reused ? "reused " : "completed ") + std::string(to_string(s)));
  }

  bool can_reuse(Stage stage, std::initializer_list<const char*> files) const {
    if (!opt_.resume) return false;
    if (opt_.recompute_from && stage >= *opt_.recompute_from) return false;
    for (const char* f : files) {
      if (!fs::exists(path(f))) return false;
    }
    return true;
  }

  TrainConfig derived_train(std::uint64_t stream, std::size_t epochs, double lr) const {
    TrainConfig t = cfg_.train;
    t.seed = Rng(cfg_.seed).split(stream).next_u64();
    t.epochs = epochs;
    t.learning_rate = lr;
    return t;
  }

  bool stage_train() {
    if (can_reuse(Stage::train, {"train.ckpt"})) {
      trained_ = restore_network(read_checkpoint(path("train.ckpt")), specs_);
      return true;
    }
    Rng rng = Rng(cfg_.seed).split(kInitStream);
    Network net = init_network(cfg_.input_dim(), specs_, rng);
    TrainConfig t = cfg_.train;
    TrainResult r = train(std::move(net), data_.train, t);
    trained_ = std::move(r.net);
    write_json(path("train.json"), json{{"loss_curve", r.loss_curve}});
    write_checkpoint(make_checkpoint(trained_), path("train.ckpt"));
    return false;
  }

  bool stage_search() {
    if (can_reuse(Stage::search_arch, {"arch.ckpt"})) {
      arch_ = restore_network(read_checkpoint(path("arch.ckpt")), specs_);
      return true;
    }
    if (!cfg_.search.enabled) {
      arch_ = trained_;
    } else {
      Rng rng = Rng(cfg_.seed).split(kSearchInitStream);
      SuperNet sn = make_dim_supernet(cfg_.input_dim(), specs_, cfg_.search.choices, rng);
      sn.penalty = cfg_.search.eta;
      sn.gumbel_samples = cfg_.search.gumbel_samples;
      SearchResult sr = pipelined_search(std::move(sn), data_.train, cfg_.search.schedule);
      Network selected = extract_network(sr.supernet, sr.selection);
      std::vector<int> labels;
      for (std::size_t l = 0; l < sr.selection.size(); ++l) {
        labels.push_back(sr.supernet.layers[l].labels[sr.selection[l]]);
      }
      write_json(path("search.json"), json{{"selection", sr.selection},
                                           {"bottlenecks", labels},
                                           {"stage1_loss", sr.stage1_loss},
                                           {"stage2_loss", sr.stage2_loss},
                                           {"trajectory", sr.trajectory}});
      const auto t = derived_train(kRetrainStream, cfg_.search.retrain_epochs, cfg_.train.learning_rate);
      arch_ = train(std::move(selected), data_.train, t).net;
    }
    write_checkpoint(make_checkpoint(arch_), path("arch.ckpt"));
    return false;
  }

  Dataset kl_frames() const {
    const Dataset& d = data_.train;
    const std::size_t per_unit = d.segment ? d.segment : 1;
    const std::size_t units = std::max<std::size_t>(1, std::min(d.units(), cfg_.quant.kl_frames / per_unit));
    std::vector<std::size_t> idx(units);
    for (std::size_t i = 0; i < units; ++i) idx[i] = i;
    return gather(d, idx);
  }

  bool stage_sensitivity() {
    if (can_reuse(Stage::sensitivity, {"sensitivity.json"})) {
      const json j = read_json(path("sensitivity.json"));
      kl_ = table_from_json(j.at("kl"));
      hes_ = table_from_json(j.at("hes"));
      return true;
    }
    const auto& bits = cfg_.quant.candidate_bits;
    kl_ = kl_table(arch_, kl_frames(), bits, opt_.jobs);
    hes_ = hessian_table(arch_, data_.train, bits, cfg_.quant.probes, Rng(cfg_.seed).split(kHessianStream),
                         opt_.jobs);
    write_json(path("sensitivity.json"), json{{"kl", table_to_json(*kl_)}, {"hes", table_to_json(*hes_)}});
    return false;
  }

  std::vector<std::size_t> layer_params() const {
    std::vector<std::size_t> p;
    for (const auto& l : arch_.layers) p.push_back(l.param_count());
    return p;
  }

  bool stage_allocate() {
    if (can_reuse(Stage::allocate, {"allocation.json"})) {
      const json j = read_json(path("allocation.json"));
      assignment_ = PrecisionAssignment::for_network(arch_, j.at("bits").get<std::vector<int>>());
      assignment_.validate(cfg_.quant.candidate_bits);
      return true;
    }
    const auto& q = cfg_.quant;
    json extra = json::object();
    switch (q.allocation) {
      case AllocationMethod::uniform:
        assignment_ = PrecisionAssignment::uniform(arch_, static_cast<int>(q.target_bits));
        break;
      case AllocationMethod::kl:
        assignment_ = allocate_bits(*kl_, layer_params(), q.target_bits);
        break;
      case AllocationMethod::hes:
        assignment_ = allocate_bits(*hes_, layer_params(), q.target_bits);
        break;
      case AllocationMethod::nas: {
        const auto t = derived_train(kFinetuneStream + 1, q.pretrain_epochs, q.learning_rate);
        const auto pre = pretrain_precision_candidates(arch_, data_.train, q.candidate_bits, t, q.admm_rho, opt_.jobs);
        const auto r = precision_nas(pre, q.candidate_bits, data_.train, q.nas_eta, cfg_.search.schedule,
                                     cfg_.search.gumbel_samples);
        assignment_ = r.assignment;
        extra = json{{"selection", r.search.selection}, {"trajectory", r.search.trajectory}};
        break;
      }
    }
    json j{{"method", std::string(to_string(q.allocation))}, {"bits", assignment_.bits}};
    if (!extra.empty()) j["search"] = extra;
    write_json(path("allocation.json"), j);
    return false;
  }

  bool stage_quantize() {
    if (can_reuse(Stage::quantize, {"quantized.ckpt"})) {
      Checkpoint c = read_checkpoint(path("quantized.ckpt"));
      apply_layer_specs(c.model, specs_);
      quantized_ = std::move(c.model);
      return true;
    }
    quantized_ = quantize_model(arch_, assignment_);
    write_checkpoint(make_checkpoint(*quantized_), path("quantized.ckpt"));
    return false;
  }

  bool stage_finetune() {
    if (can_reuse(Stage::finetune, {"final.ckpt"})) {
      Checkpoint c = read_checkpoint(path("final.ckpt"));
      apply_layer_specs(c.model, specs_);
      final_ = std::move(c.model);
      return true;
    }
    const auto& q = cfg_.quant;
    const auto t = derived_train(kFinetuneStream, q.epochs, q.learning_rate);
    std::vector<double> curve;
    Network shadow;
    switch (q.scheme) {
      case FinetuneScheme::qat: {
        auto r = train_qat(arch_, data_.train, assignment_, t);
        final_ = std::move(r.model);
        shadow = std::move(r.shadow);
        curve = std::move(r.loss_curve);
        break;
      }
      case FinetuneScheme::bp: {
        auto r = train_modified_bp(arch_, data_.train, assignment_, t);
        final_ = std::move(r.model);
        shadow = std::move(r.shadow);
        curve = std::move(r.loss_curve);
        break;
      }
      case FinetuneScheme::admm: {
        auto r = train_admm(arch_, data_.train, assignment_, t, q.admm_rho);
        final_ = std::move(r.model);
        shadow = std::move(r.shadow);
        for (const auto& h : r.history) curve.push_back(h.primal_residual);
        break;
      }
    }
    write_json(path("finetune.json"), json{{"scheme", std::string(to_string(q.scheme))}, {"curve", curve}});
    write_checkpoint(make_checkpoint(*final_, &shadow), path("final.ckpt"));
    return false;
  }

  bool stage_report() {
    RunSummary s;
    s.name = cfg_.name;
    s.seed = cfg_.seed;
    for (const auto& l : arch_.layers) {
      s.out_dims.push_back(l.out_dim());
      s.bottlenecks.push_back(l.bottleneck());
    }
    s.params = arch_.param_count();
    s.full_precision_bytes = model_size_bytes(arch_);
    s.full_precision_accuracy = accuracy(arch_, data_.test);
    std::vector<ReportRow> rows;
    if (cfg_.quant.enabled) {
      s.quantized = true;
      s.allocation = to_string(cfg_.quant.allocation);
      s.scheme = to_string(cfg_.quant.scheme);
      s.target_bits = cfg_.quant.target_bits;
      s.size = size_report(*final_);
      s.quantized_accuracy = accuracy(quantized_->dequantize(), data_.test);
      s.final_accuracy = accuracy(final_->dequantize(), data_.test);
      for (std::size_t l = 0; l < final_->layers.size(); ++l) {
        ReportRow r;
        r.layer = l;
        r.bits = s.size.layers[l].bits;
        r.params = s.size.layers[l].params;
        r.bytes = s.size.layers[l].code_bytes + s.size.layers[l].overhead_bytes;
        if (kl_) r.omega_kl = kl_->at(l, r.bits);
        if (hes_) r.omega_hes = hes_->at(l, r.bits);
        rows.push_back(r);
      }
    } else {
      for (std::size_t l = 0; l < arch_.layers.size(); ++l) {
        ReportRow r;
        r.layer = l;
        r.bits = 32;
        r.params = arch_.layers[l].param_count();
        r.bytes = full_precision_bytes(r.params);
        rows.push_back(r);
      }
    }
    write_report(opt_.out, rows, s);
    return false;
  }

  PipelineResult finish() {
    result_.network = arch_.layers.empty() ? trained_ : arch_;
    result_.final_model = final_;
    if (!result_.network.layers.empty()) result_.full_precision_accuracy = accuracy(result_.network, data_.test);
    if (final_) result_.final_accuracy = accuracy(final_->dequantize(), data_.test);
    return std::move(result_);
  }

  const ExperimentConfig& cfg_;
  const PipelineOptions& opt_;
  ExperimentData data_;
  std::vector<LayerSpec> specs_;
  Network trained_;
  Network arch_;
  std::optional<SensitivityTable> kl_;
  std::optional<SensitivityTable> hes_;
  PrecisionAssignment assignment_;
  std::optional<QuantizedNetwork> quantized_;
  std::optional<QuantizedNetwork> final_;
  PipelineResult result_;
};

}  // namespace

PipelineResult run_pipeline(const ExperimentConfig& cfg, const PipelineOptions& options) {
  cfg.validate();
  if (options.jobs == 0) throw ConfigError("jobs must be positive");
  return Runner(cfg, options).run();
}

}  // namespace mpq
