// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpq/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "mpq/errors.hpp"
#include "mpq/io.hpp"
#include "mpq/quant.hpp"

namespace mpq {

std::string_view to_string(AllocationMethod m) {
  switch (m) {
    case AllocationMethod::uniform: return "uniform";
    case AllocationMethod::kl: return "kl";
    case AllocationMethod::hes: return "hes";
    case AllocationMethod::nas: return "nas";
  }
  return "?";
}

std::string_view to_string(FinetuneScheme s) {
  switch (s) {
    case FinetuneScheme::qat: return "qat";
    case FinetuneScheme::bp: return "bp";
    case FinetuneScheme::admm: return "admm";
  }
  return "?";
}

namespace {

struct Entry {
  std::string value;
  int line = 0;
};

using Section = std::map<std::string, Entry>;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::map<std::string, Section> parse_sections(std::string_view text) {
  std::map<std::string, Section> out;
  std::string current;
  int line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      current = trim(line.substr(1, line.size() - 2));
      if (current.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty section name");
      if (out.count(current)) throw ConfigError("line " + std::to_string(line_no) + ": duplicate section [" + current + "]");
      out[current];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    if (current.empty()) throw ConfigError("line " + std::to_string(line_no) + ": key outside of a section");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    auto& sec = out[current];
    if (sec.count(key)) throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    sec[key] = Entry{trim(line.substr(eq + 1)), line_no};
  }
  return out;
}

class Fields {
 public:
  Fields(std::string name, Section sec) : name_(std::move(name)), sec_(std::move(sec)) {}

  template <typename Fn>
  void take(const std::string& key, Fn&& fn) {
    auto it = sec_.find(key);
    if (it == sec_.end()) return;
    try {
      fn(it->second.value);
    } catch (const ConfigError& e) {
      throw ConfigError(where(it->second, key) + e.what());
    }
    sec_.erase(it);
  }

  void finish() const {
    if (!sec_.empty()) {
      const auto& [key, entry] = *sec_.begin();
      throw ConfigError(where(entry, key) + "unknown key");
    }
  }

 private:
  std::string where(const Entry& e, const std::string& key) const {
    return "line " + std::to_string(e.line) + ": [" + name_ + "] " + key + ": ";
  }
  std::string name_;
  Section sec_;
};

template <typename T>
T parse_number(const std::string& s) {
  T v{};
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) throw ConfigError("invalid number '" + s + "'");
  return v;
}

std::size_t parse_size(const std::string& s) { return parse_number<std::size_t>(s); }
std::uint64_t parse_u64(const std::string& s) { return parse_number<std::uint64_t>(s); }
double parse_double(const std::string& s) {
  const double v = parse_number<double>(s);
  if (!std::isfinite(v)) throw ConfigError("non-finite number '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  throw ConfigError("invalid boolean '" + s + "'");
}

template <typename T, typename Fn>
std::vector<T> parse_list(const std::string& s, Fn&& item) {
  std::vector<T> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = s.find(',', start);
    const std::string tok = trim(s.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (tok.empty()) throw ConfigError("empty list element");
    out.push_back(item(tok));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

Activation parse_act(const std::string& s) {
  try {
    return parse_activation(s);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

AllocationMethod parse_allocation(const std::string& s) {
  for (auto m : {AllocationMethod::uniform, AllocationMethod::kl, AllocationMethod::hes, AllocationMethod::nas}) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError("unknown allocation method '" + s + "'");
}

FinetuneScheme parse_scheme(const std::string& s) {
  for (auto m : {FinetuneScheme::qat, FinetuneScheme::bp, FinetuneScheme::admm}) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError("unknown finetune scheme '" + s + "'");
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

void ExperimentConfig::set_seed(std::uint64_t s) {
  seed = s;
  data.blobs.seed = s;
  data.planted_rank.seed = s;
  data.sequence.seed = s;
  train.seed = s;
  search.schedule.seed = s;
}

std::size_t ExperimentConfig::input_dim() const {
  if (data.generator == "blobs") return data.blobs.dim;
  if (data.generator == "planted_rank") return data.planted_rank.input_dim;
  if (data.generator == "sequence") return data.sequence.dim;
  throw ConfigError("unknown dataset generator '" + data.generator + "'");
}

std::size_t ExperimentConfig::num_classes() const {
  if (data.generator == "blobs") return data.blobs.classes;
  if (data.generator == "planted_rank") return data.planted_rank.classes;
  if (data.generator == "sequence") return data.sequence.classes;
  throw ConfigError("unknown dataset generator '" + data.generator + "'");
}

std::vector<LayerSpec> ExperimentConfig::layer_specs() const {
  std::vector<LayerSpec> specs;
  std::size_t width = input_dim();
  for (std::size_t i = 0; i < model.hidden_dims.size(); ++i) {
    LayerSpec s;
    s.out_dim = model.hidden_dims[i];
    s.activation = model.activation;
    if (i == 0) s.context = model.context;
    const std::size_t in = width * (s.context.empty() ? 1 : s.context.size());
    s.bottleneck = std::min({model.bottleneck, s.out_dim, in});
    specs.push_back(s);
    width = s.out_dim;
  }
  LayerSpec out;
  out.out_dim = num_classes();
  out.activation = Activation::identity;
  if (specs.empty()) out.context = model.context;
  const std::size_t in = width * (out.context.empty() ? 1 : out.context.size());
  out.bottleneck = std::min(out.out_dim, in);
  specs.push_back(out);
  return specs;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (data.generator != "blobs" && data.generator != "planted_rank" && data.generator != "sequence") {
    fail("data.generator must be blobs, planted_rank or sequence");
  }
  if (data.generator == "sequence" && data.sequence.context.empty()) fail("data.context must not be empty");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) fail("data.test_fraction must be in (0, 1)");
  if (model.bottleneck == 0) fail("model.bottleneck must be positive");
  for (auto d : model.hidden_dims) {
    if (d == 0) fail("model.hidden_dims entries must be positive");
  }
  if (!model.context.empty() && data.generator != "sequence") fail("model.context requires the sequence generator");
  try {
    train.validate();
    search.schedule.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
  if (search.enabled) {
    if (search.choices.empty()) fail("search.choices must not be empty");
    if (search.gumbel_samples == 0) fail("search.gumbel_samples must be positive");
    if (!(search.eta >= 0.0)) fail("search.eta must be non-negative");
  }
  if (quant.enabled) {
    if (quant.candidate_bits.empty()) fail("quant.candidate_bits must not be empty");
    for (int b : quant.candidate_bits) {
      if (!is_supported_bits(b)) fail("quant.candidate_bits: unsupported bit-width " + std::to_string(b));
    }
    auto sorted = quant.candidate_bits;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) fail("quant.candidate_bits has duplicates");
    if (!(quant.target_bits > 0.0)) fail("quant.target_bits must be positive");
    if (quant.allocation == AllocationMethod::uniform &&
        std::find(quant.candidate_bits.begin(), quant.candidate_bits.end(),
                  static_cast<int>(quant.target_bits)) == quant.candidate_bits.end()) {
      fail("quant.target_bits must be a candidate bit-width for uniform allocation");
    }
    if (!(quant.learning_rate >= 0.0)) fail("quant.learning_rate must be non-negative");
    if (quant.probes == 0) fail("quant.probes must be positive");
    if (quant.kl_frames == 0) fail("quant.kl_frames must be positive");
    if (!(quant.nas_eta >= 0.0)) fail("quant.nas_eta must be non-negative");
  }
  // Layer shapes must be constructible.
  (void)layer_specs();
}

ExperimentConfig parse_config(std::string_view text) {
  auto sections = parse_sections(text);
  static const char* known[] = {"experiment", "data", "model", "train", "search", "quant"};
  for (const auto& [name, sec] : sections) {
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return name == k; }) == std::end(known)) {
      const int line = sec.empty() ? 0 : sec.begin()->second.line;
      throw ConfigError("unknown section [" + name + "]" + (line ? " near line " + std::to_string(line) : ""));
    }
  }
  ExperimentConfig c;
  auto section = [&](const char* name) { return Fields(name, sections.count(name) ? sections[name] : Section{}); };

  {
    Fields f = section("experiment");
    f.take("name", [&](const std::string& v) { c.name = v; });
    f.take("seed", [&](const std::string& v) { c.set_seed(parse_u64(v)); });
    f.finish();
  }
  {
    Fields f = section("data");
    auto& d = c.data;
    f.take("generator", [&](const std::string& v) { d.generator = v; });
    f.take("seed", [&](const std::string& v) {
      d.blobs.seed = d.planted_rank.seed = d.sequence.seed = parse_u64(v);
    });
    f.take("classes", [&](const std::string& v) {
      d.blobs.classes = d.planted_rank.classes = d.sequence.classes = parse_size(v);
    });
    f.take("dim", [&](const std::string& v) {
      d.blobs.dim = d.planted_rank.input_dim = d.sequence.dim = parse_size(v);
    });
    f.take("samples", [&](const std::string& v) { d.blobs.samples = d.planted_rank.samples = parse_size(v); });
    f.take("separation", [&](const std::string& v) { d.blobs.separation = parse_double(v); });
    f.take("sigma", [&](const std::string& v) { d.blobs.sigma = parse_double(v); });
    f.take("rank", [&](const std::string& v) { d.planted_rank.rank = parse_size(v); });
    f.take("hidden", [&](const std::string& v) { d.planted_rank.hidden = parse_size(v); });
    f.take("sequences", [&](const std::string& v) { d.sequence.sequences = parse_size(v); });
    f.take("length", [&](const std::string& v) { d.sequence.length = parse_size(v); });
    f.take("context", [&](const std::string& v) {
      d.sequence.context = parse_list<int>(v, [](const std::string& t) { return parse_number<int>(t); });
    });
    f.take("test_fraction", [&](const std::string& v) { c.test_fraction = parse_double(v); });
    f.finish();
  }
  {
    Fields f = section("model");
    f.take("hidden_dims", [&](const std::string& v) { c.model.hidden_dims = parse_list<std::size_t>(v, parse_size); });
    f.take("bottleneck", [&](const std::string& v) { c.model.bottleneck = parse_size(v); });
    f.take("activation", [&](const std::string& v) { c.model.activation = parse_act(v); });
    f.take("context", [&](const std::string& v) {
      c.model.context = parse_list<int>(v, [](const std::string& t) { return parse_number<int>(t); });
    });
    f.finish();
  }
  {
    Fields f = section("train");
    f.take("learning_rate", [&](const std::string& v) { c.train.learning_rate = parse_double(v); });
    f.take("batch_size", [&](const std::string& v) { c.train.batch_size = parse_size(v); });
    f.take("epochs", [&](const std::string& v) { c.train.epochs = parse_size(v); });
    f.take("semi_orth_interval", [&](const std::string& v) { c.train.semi_orth_interval = parse_size(v); });
    f.finish();
  }
  {
    Fields f = section("search");
    auto& s = c.search;
    auto& sc = s.schedule;
    f.take("enabled", [&](const std::string& v) { s.enabled = parse_bool(v); });
    f.take("choices", [&](const std::string& v) { s.choices = parse_list<std::size_t>(v, parse_size); });
    f.take("eta", [&](const std::string& v) { s.eta = parse_double(v); });
    f.take("gumbel_samples", [&](const std::string& v) { s.gumbel_samples = parse_size(v); });
    f.take("retrain_epochs", [&](const std::string& v) { s.retrain_epochs = parse_size(v); });
    f.take("stage1_epochs", [&](const std::string& v) { sc.stage1_epochs = parse_size(v); });
    f.take("stage2_epochs", [&](const std::string& v) { sc.stage2_epochs = parse_size(v); });
    f.take("heldout_fraction", [&](const std::string& v) { sc.heldout_fraction = parse_double(v); });
    f.take("temperature_start", [&](const std::string& v) { sc.temperature_start = parse_double(v); });
    f.take("temperature_end", [&](const std::string& v) { sc.temperature_end = parse_double(v); });
    f.take("weight_learning_rate", [&](const std::string& v) { sc.weight_learning_rate = parse_double(v); });
    f.take("arch_learning_rate", [&](const std::string& v) { sc.arch_learning_rate = parse_double(v); });
    f.take("batch_size", [&](const std::string& v) { sc.batch_size = parse_size(v); });
    f.take("patience", [&](const std::string& v) { sc.patience = parse_size(v); });
    f.finish();
  }
  {
    Fields f = section("quant");
    auto& q = c.quant;
    f.take("enabled", [&](const std::string& v) { q.enabled = parse_bool(v); });
    f.take("candidate_bits", [&](const std::string& v) {
      q.candidate_bits = parse_list<int>(v, [](const std::string& t) { return parse_number<int>(t); });
    });
    f.take("target_bits", [&](const std::string& v) { q.target_bits = parse_double(v); });
    f.take("allocation", [&](const std::string& v) { q.allocation = parse_allocation(v); });
    f.take("scheme", [&](const std::string& v) { q.scheme = parse_scheme(v); });
    f.take("epochs", [&](const std::string& v) { q.epochs = parse_size(v); });
    f.take("learning_rate", [&](const std::string& v) { q.learning_rate = parse_double(v); });
    f.take("probes", [&](const std::string& v) { q.probes = parse_size(v); });
    f.take("kl_frames", [&](const std::string& v) { q.kl_frames = parse_size(v); });
    f.take("nas_eta", [&](const std::string& v) { q.nas_eta = parse_double(v); });
    f.take("admm_rho", [&](const std::string& v) { q.admm_rho = parse_double(v); });
    f.take("pretrain_epochs", [&](const std::string& v) { q.pretrain_epochs = parse_size(v); });
    f.finish();
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file_text(path);
  } catch (const IoError& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  return parse_config(text);
}

std::string format_config(const ExperimentConfig& c) {
  std::ostringstream o;
  const auto& d = c.data;
  std::uint64_t data_seed = d.blobs.seed;
  if (d.generator == "planted_rank") data_seed = d.planted_rank.seed;
  if (d.generator == "sequence") data_seed = d.sequence.seed;
  o << "[experiment]\nname = " << c.name << "\nseed = " << c.seed << "\n\n";
  o << "[data]\ngenerator = " << d.generator << "\nseed = " << data_seed << "\n";
  if (d.generator == "blobs") {
    o << "classes = " << d.blobs.classes << "\ndim = " << d.blobs.dim << "\nsamples = " << d.blobs.samples
      << "\nseparation = " << fmt_double(d.blobs.separation) << "\nsigma = " << fmt_double(d.blobs.sigma) << "\n";
  } else if (d.generator == "planted_rank") {
    o << "classes = " << d.planted_rank.classes << "\ndim = " << d.planted_rank.input_dim
      << "\nsamples = " << d.planted_rank.samples << "\nrank = " << d.planted_rank.rank
      << "\nhidden = " << d.planted_rank.hidden << "\n";
  } else {
    o << "classes = " << d.sequence.classes << "\ndim = " << d.sequence.dim << "\nsequences = " << d.sequence.sequences
      << "\nlength = " << d.sequence.length << "\ncontext = " << join(d.sequence.context) << "\n";
  }
  o << "test_fraction = " << fmt_double(c.test_fraction) << "\n\n";
  o << "[model]\nhidden_dims = " << join(c.model.hidden_dims) << "\nbottleneck = " << c.model.bottleneck
    << "\nactivation = " << to_string(c.model.activation) << "\n";
  if (!c.model.context.empty()) o << "context = " << join(c.model.context) << "\n";
  o << "\n[train]\nlearning_rate = " << fmt_double(c.train.learning_rate) << "\nbatch_size = " << c.train.batch_size
    << "\nepochs = " << c.train.epochs << "\nsemi_orth_interval = " << c.train.semi_orth_interval << "\n\n";
  const auto& s = c.search;
  const auto& sc = s.schedule;
  o << "[search]\nenabled = " << (s.enabled ? "true" : "false") << "\nchoices = " << join(s.choices)
    << "\neta = " << fmt_double(s.eta) << "\ngumbel_samples = " << s.gumbel_samples
    << "\nretrain_epochs = " << s.retrain_epochs << "\nstage1_epochs = " << sc.stage1_epochs
    << "\nstage2_epochs = " << sc.stage2_epochs << "\nheldout_fraction = " << fmt_double(sc.heldout_fraction)
    << "\ntemperature_start = " << fmt_double(sc.temperature_start)
    << "\ntemperature_end = " << fmt_double(sc.temperature_end)
    << "\nweight_learning_rate = " << fmt_double(sc.weight_learning_rate)
    << "\narch_learning_rate = " << fmt_double(sc.arch_learning_rate) << "\nbatch_size = " << sc.batch_size
    << "\npatience = " << sc.patience << "\n\n";
  const auto& q = c.quant;
  o << "[quant]\nenabled = " << (q.enabled ? "true" : "false") << "\ncandidate_bits = " << join(q.candidate_bits)
    << "\ntarget_bits = " << fmt_double(q.target_bits) << "\nallocation = " << to_string(q.allocation)
    << "\nscheme = " << to_string(q.scheme) << "\nepochs = " << q.epochs
    << "\nlearning_rate = " << fmt_double(q.learning_rate) << "\nprobes = " << q.probes
    << "\nkl_frames = " << q.kl_frames << "\nnas_eta = " << fmt_double(q.nas_eta)
    << "\nadmm_rho = " << fmt_double(q.admm_rho) << "\npretrain_epochs = " << q.pretrain_epochs << "\n";
  return o.str();
}

}  // namespace mpq
