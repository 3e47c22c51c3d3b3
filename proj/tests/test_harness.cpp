// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "json.hpp"
#include "mpq/checkpoint.hpp"
#include "mpq/config.hpp"
#include "mpq/errors.hpp"
#include "mpq/generators.hpp"
#include "mpq/io.hpp"
#include "mpq/pipeline.hpp"
#include "mpq/report.hpp"

using namespace mpq;
namespace fs = std::filesystem;

namespace {

const char* kSmallConfig = R"(# small end-to-end run
[experiment]
name = small
seed = 3

[data]
generator = blobs
classes = 4
dim = 8
samples = 400
separation = 4.0

[model]
hidden_dims = 16, 16
bottleneck = 8

[train]
learning_rate = 0.05
epochs = 8

[search]
enabled = true
choices = 2, 4, 8
stage1_epochs = 3
stage2_epochs = 3
heldout_fraction = 0.1
retrain_epochs = 2

[quant]
candidate_bits = 2, 4, 8
target_bits = 4
allocation = hes
scheme = qat
epochs = 2
probes = 4
)";

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mpq_test_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<std::uint8_t> to_bytes(const Dataset& d) {
  std::vector<std::uint8_t> out;
  const auto* x = reinterpret_cast<const std::uint8_t*>(d.x.data().data());
  out.insert(out.end(), x, x + d.x.size() * sizeof(double));
  const auto* y = reinterpret_cast<const std::uint8_t*>(d.labels.data());
  out.insert(out.end(), y, y + d.labels.size() * sizeof(int));
  return out;
}

}  // namespace

TEST_CASE("blobs generator") {
  BlobsSpec s;
  s.separation = 10.0;
  s.samples = 1000;
  s.seed = 7;
  const Dataset d = make_blobs(s);
  CHECK(to_bytes(d) == to_bytes(make_blobs(s)));
  Rng rng(1);
  const std::vector<LayerSpec> linear{{s.classes, s.classes, Activation::identity, {}}};
  TrainConfig cfg;
  cfg.epochs = 20;
  const Network net = train(init_network(s.dim, linear, rng), d, cfg).net;
  CHECK(accuracy(net, d) >= 0.999);
  s.seed = 8;
  CHECK(to_bytes(d) != to_bytes(make_blobs(s)));
}

TEST_CASE("planted-rank generator") {
  PlantedRankSpec s;
  s.samples = 500;
  s.seed = 3;
  const PlantedRank pr = make_planted_rank(s);
  CHECK(pr.teacher.layers[0].bottleneck() == 8);
  CHECK(accuracy(pr.teacher, pr.data) == 1.0);
  CHECK(to_bytes(pr.data) == to_bytes(make_planted_rank(s).data));
}

TEST_CASE("sequence generator") {
  SequenceSpec s;
  s.seed = 4;
  const Dataset d = make_sequence(s);
  CHECK(d.segment == s.length);
  CHECK(d.rows() == s.sequences * s.length);
  DatasetSpec spec;
  spec.generator = "sequence";
  spec.sequence = s;
  CHECK(to_bytes(gen_dataset(spec)) == to_bytes(d));
  spec.generator = "spirals";
  CHECK_THROWS_AS(gen_dataset(spec), ArgumentError);
}

TEST_CASE("config parsing") {
  const ExperimentConfig c = parse_config(kSmallConfig);
  CHECK(c.name == "small");
  CHECK(c.data.blobs.seed == 3);
  CHECK(c.model.hidden_dims == std::vector<std::size_t>{16, 16});
  CHECK(c.search.enabled);
  CHECK(c.quant.allocation == AllocationMethod::hes);
  CHECK(c.layer_specs().size() == 3);
  CHECK(c.layer_specs().back().activation == Activation::identity);

  const ExperimentConfig again = parse_config(format_config(c));
  CHECK(format_config(again) == format_config(c));

  CHECK_THROWS_AS(parse_config("[model]\nwidth = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[modle]\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\nepochs = 3\nepochs = 4\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\nepochs = many\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\nepochs\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[quant]\ncandidate_bits = 3, 4\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[data]\ngenerator = spirals\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.ini"), ConfigError);
}

TEST_CASE("report formatting") {
  std::vector<ReportRow> rows{{0, 4, 100, 71, 0.5, std::nullopt}, {1, 8, 50, 71, std::nullopt, 2.0}};
  const std::string csv = format_report_csv(rows);
  CHECK(csv.rfind(std::string(kReportCsvHeader) + "\n", 0) == 0);
  CHECK(csv.find("0,4,100,71,5.000000000e-01,\n") != std::string::npos);
  CHECK(csv.find("1,8,50,71,,2.000000000e+00\n") != std::string::npos);
}

TEST_CASE("reference system fixtures") {
  const auto j = nlohmann::json::parse(read_file_text(fs::path(MPQ_SOURCE_DIR) / "fixtures" / "reference_systems.json"));
  CHECK(j["dim_choices"].get<std::vector<std::size_t>>() == fixtures::kDimChoices);
  CHECK(j["searched_dim_indices"].get<std::vector<std::size_t>>() == fixtures::kSearchedDimIndices);
  CHECK(j["mixed_bits_8bit_kl"].get<std::vector<int>>() == fixtures::kFootnoteBits);
  CHECK(fixtures::kDimChoices[fixtures::kBaselineDimIndex] == 160);
  std::size_t total = 0;
  for (std::size_t i : fixtures::kSearchedDimIndices) total += fixtures::kDimChoices[i];
  CHECK(total == 80 + 100 + 80 + 25 + 80 + 80 + 80 + 50 + 80 + 50 + 25 + 100 + 160 + 160);
}

TEST_CASE("pipeline end to end") {
  const ExperimentConfig cfg = parse_config(kSmallConfig);
  const fs::path a = fresh_dir("pipe_a"), b = fresh_dir("pipe_b");
  PipelineOptions oa;
  oa.out = a;
  const PipelineResult ra = run_pipeline(cfg, oa);
  REQUIRE(ra.final_model.has_value());
  CHECK(ra.computed.size() == 7);

  const std::string csv = read_file_text(a / "report.csv");
  CHECK(csv.rfind(kReportCsvHeader, 0) == 0);
  const std::string summary = read_file_text(a / "summary.txt");
  for (const char* needle : {"bits", "bytes", "compression", "accuracy"}) CHECK(summary.find(needle) != std::string::npos);

  PipelineOptions ob;
  ob.out = b;
  ob.jobs = 4;
  run_pipeline(cfg, ob);
  for (const char* f : {"report.csv", "summary.txt", "final.ckpt"})
    CHECK(read_file_bytes(a / f) == read_file_bytes(b / f));

  PipelineOptions resume = oa;
  resume.resume = true;
  const PipelineResult rr = run_pipeline(cfg, resume);
  CHECK(rr.computed == std::vector<Stage>{Stage::report});
  CHECK(rr.reused.size() == 6);

  resume.recompute_from = Stage::finetune;
  const PipelineResult rf = run_pipeline(cfg, resume);
  CHECK(rf.computed == std::vector<Stage>{Stage::finetune, Stage::report});
  CHECK(read_file_text(a / "report.csv") == csv);

  ExperimentConfig changed = cfg;
  changed.quant.epochs = 3;
  PipelineOptions stale = oa;
  stale.resume = true;
  CHECK_THROWS_AS(run_pipeline(changed, stale), ConfigError);
}

TEST_CASE("pipeline without quantization") {
  ExperimentConfig cfg = parse_config(kSmallConfig);
  cfg.quant.enabled = false;
  PipelineOptions o;
  o.out = fresh_dir("pipe_fp");
  const PipelineResult r = run_pipeline(cfg, o);
  CHECK(!r.final_model.has_value());
  CHECK(fs::exists(o.out / "arch.ckpt"));
  CHECK(!fs::exists(o.out / "final.ckpt"));
  CHECK(fs::exists(o.out / "summary.txt"));

  ExperimentConfig with_q = parse_config(kSmallConfig);
  PipelineOptions oq;
  oq.out = fresh_dir("pipe_q");
  oq.stop_after = Stage::search_arch;
  const PipelineResult rq = run_pipeline(with_q, oq);
  CHECK(read_file_bytes(o.out / "arch.ckpt") == read_file_bytes(oq.out / "arch.ckpt"));
  CHECK(r.full_precision_accuracy == rq.full_precision_accuracy);
}

TEST_CASE("pipeline stage failures name the stage") {
  ExperimentConfig cfg = parse_config(kSmallConfig);
  cfg.search.enabled = false;
  cfg.train.learning_rate = 1e200;
  PipelineOptions o;
  o.out = fresh_dir("pipe_fail");
  try {
    run_pipeline(cfg, o);
    FAIL("expected a failure");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).rfind("stage train: ", 0) == 0);
  }
}
