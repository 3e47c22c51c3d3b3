// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpq/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "mpq/errors.hpp"
#include "mpq/io.hpp"
#include "mpq/size.hpp"

namespace mpq {

namespace {

constexpr char kMagic[4] = {'M', 'P', 'Q', '1'};
constexpr char kShadowMagic[4] = {'S', 'H', 'D', 'W'};

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}
  void bytes(const char* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::size_t remaining() const { return in_.size() - pos_; }
  void need(std::uint64_t n, const char* what) const {
    if (n > remaining()) throw TruncatedError(std::string("checkpoint truncated in ") + what);
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8(const char* what) { return take(1, what)[0]; }
  std::uint16_t u16(const char* what) { return static_cast<std::uint16_t>(le(2, what)); }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(le(4, what)); }
  double f64(const char* what) { return std::bit_cast<double>(le(8, what)); }

 private:
  std::uint64_t le(int n, const char* what) {
    auto s = take(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(s[static_cast<std::size_t>(i)]) << (8 * i);
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::uint32_t to_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) throw ArgumentError(std::string("checkpoint: ") + what + " exceeds 32 bits");
  return static_cast<std::uint32_t>(v);
}

void pack_codes(const QuantizedLayer& l, std::vector<std::uint8_t>& out) {
  const int n = l.table.bits();
  const std::size_t start = out.size();
  out.resize(start + packed_code_bytes(l.codes.size(), n), 0);
  const std::uint64_t mask = (n == 64) ? ~0ull : ((1ull << n) - 1);
  std::uint64_t bit = 0;
  for (const std::int32_t c : l.codes) {
    if (!l.table.valid_code(c)) throw CodeRangeError("checkpoint: code out of table range");
    std::uint64_t u = n == 1 ? (c > 0 ? 1u : 0u) : (static_cast<std::uint64_t>(static_cast<std::int64_t>(c)) & mask);
    for (int k = 0; k < n; ++k, ++bit) {
      if ((u >> k) & 1u) out[start + bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
    }
  }
}

std::vector<std::int32_t> unpack_codes(std::span<const std::uint8_t> bytes, std::size_t count, int n) {
  std::vector<std::int32_t> codes(count);
  const std::int32_t limit = max_code(n);
  std::uint64_t bit = 0;
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t u = 0;
    for (int k = 0; k < n; ++k, ++bit) {
      if ((bytes[bit / 8] >> (bit % 8)) & 1u) u |= 1ull << k;
    }
    std::int32_t c;
    if (n == 1) {
      c = u ? 1 : -1;
    } else {
      std::int64_t v = static_cast<std::int64_t>(u);
      if (u >> (n - 1)) v -= static_cast<std::int64_t>(1) << n;
      if (v < -limit || v > limit) throw CodeRangeError("checkpoint: code out of table range");
      c = static_cast<std::int32_t>(v);
    }
    codes[i] = c;
  }
  return codes;
}

}  // namespace

Checkpoint make_checkpoint(const QuantizedNetwork& model, const Network* shadow) {
  Checkpoint c;
  c.model = model;
  if (shadow != nullptr) {
    if (shadow->layers.size() != model.layers.size()) {
      throw DimensionError("make_checkpoint: shadow layer count mismatch");
    }
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      const auto& s = shadow->layers[l];
      const auto& q = model.layers[l];
      if (s.out_dim() != q.out_dim || s.in_dim() != q.in_dim || s.bottleneck() != q.bottleneck) {
        throw DimensionError("make_checkpoint: shadow shape mismatch at layer " + std::to_string(l));
      }
      c.shadow.push_back(flatten_layer(s));
    }
  }
  return c;
}

Checkpoint make_checkpoint(const Network& net) {
  const auto model = quantize_model(net, PrecisionAssignment::uniform(net, 16));
  return make_checkpoint(model, &net);
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out;
  out.reserve(encoded_size(ckpt));
  Writer w(out);
  w.bytes(kMagic, 4);
  w.u16(ckpt.version);
  w.u32(to_u32(ckpt.model.layers.size(), "layer count"));
  for (const auto& l : ckpt.model.layers) {
    l.validate();
    w.u32(to_u32(l.out_dim, "out_dim"));
    w.u32(to_u32(l.in_dim, "in_dim"));
    w.u32(to_u32(l.bottleneck, "bottleneck"));
    w.u8(static_cast<std::uint8_t>(l.table.bits()));
    w.f64(l.table.alpha());
    pack_codes(l, out);
  }
  if (ckpt.has_shadow()) {
    if (ckpt.shadow.size() != ckpt.model.layers.size()) {
      throw DimensionError("encode_checkpoint: shadow layer count mismatch");
    }
    w.bytes(kShadowMagic, 4);
    for (std::size_t l = 0; l < ckpt.shadow.size(); ++l) {
      if (ckpt.shadow[l].size() != ckpt.model.layers[l].param_count()) {
        throw DimensionError("encode_checkpoint: shadow size mismatch");
      }
      for (double v : ckpt.shadow[l].values()) w.f64(v);
    }
  }
  return out;
}

std::uint64_t encoded_size(const Checkpoint& ckpt) {
  std::uint64_t total = model_size_bytes(ckpt.model);
  if (ckpt.has_shadow()) {
    total += 4;
    for (const auto& s : ckpt.shadow) total += 8 * static_cast<std::uint64_t>(s.size());
  }
  return total;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw MagicMismatchError("checkpoint: bad magic");
  Checkpoint c;
  c.version = r.u16("version");
  if (c.version != kCheckpointVersion) {
    throw VersionMismatchError("checkpoint: unsupported version " + std::to_string(c.version));
  }
  const std::uint32_t count = r.u32("layer count");
  // Each layer needs at least its fixed overhead.
  r.need(static_cast<std::uint64_t>(count) * kLayerOverheadBytes, "layer table");
  for (std::uint32_t i = 0; i < count; ++i) {
    QuantizedLayer l;
    l.cluster = i;
    l.out_dim = r.u32("layer dims");
    l.in_dim = r.u32("layer dims");
    l.bottleneck = r.u32("layer dims");
    const int bits = r.u8("bit-width");
    const double alpha = r.f64("scale");
    if (!is_supported_bits(bits)) throw FormatError("checkpoint: unsupported bit-width " + std::to_string(bits));
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw FormatError("checkpoint: invalid scale");
    if (l.out_dim == 0 || l.in_dim == 0 || l.bottleneck == 0 ||
        l.bottleneck > std::min(l.out_dim, l.in_dim)) {
      throw FormatError("checkpoint: invalid layer dimensions");
    }
    l.table = QuantTable(bits, alpha);
    const std::uint64_t params = static_cast<std::uint64_t>(l.bottleneck) * (l.out_dim + l.in_dim);
    const auto nbytes = packed_code_bytes(params, bits);
    r.need(nbytes, "codes");
    l.codes = unpack_codes(r.take(static_cast<std::size_t>(nbytes), "codes"), params, bits);
    c.model.layers.push_back(std::move(l));
  }
  if (r.remaining() > 0) {
    auto tag = r.take(std::min<std::size_t>(4, r.remaining()), "shadow tag");
    if (tag.size() < 4) throw TruncatedError("checkpoint truncated in shadow tag");
    if (std::memcmp(tag.data(), kShadowMagic, 4) != 0) throw FormatError("checkpoint: trailing bytes");
    for (const auto& l : c.model.layers) {
      r.need(8 * static_cast<std::uint64_t>(l.param_count()), "shadow");
      Tensor t({l.param_count()});
      for (auto& v : t.values()) v = r.f64("shadow");
      c.shadow.push_back(std::move(t));
    }
    if (r.remaining() > 0) throw FormatError("checkpoint: trailing bytes");
  }
  return c;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

void apply_layer_specs(QuantizedNetwork& model, std::span<const LayerSpec> specs) {
  if (specs.size() != model.layers.size()) throw DimensionError("apply_layer_specs: layer count mismatch");
  for (std::size_t l = 0; l < specs.size(); ++l) {
    auto& q = model.layers[l];
    if (specs[l].out_dim != q.out_dim) throw DimensionError("apply_layer_specs: out_dim mismatch");
    q.activation = specs[l].activation;
    q.context = specs[l].context;
    q.validate();
  }
}

Network restore_network(const Checkpoint& ckpt, std::span<const LayerSpec> specs) {
  QuantizedNetwork model = ckpt.model;
  apply_layer_specs(model, specs);
  Network net = model.dequantize();
  if (ckpt.has_shadow()) {
    for (std::size_t l = 0; l < net.layers.size(); ++l) assign_layer(net.layers[l], ckpt.shadow[l]);
  }
  net.validate();
  return net;
}

}  // namespace mpq
