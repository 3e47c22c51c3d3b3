// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>

#include "doctest.h"
#include "fixtures.hpp"
#include "mpq/checkpoint.hpp"
#include "mpq/errors.hpp"
#include "mpq/io.hpp"
#include "mpq/size.hpp"

using namespace mpq;

namespace {

QuantizedLayer make_qlayer(std::size_t out, std::size_t in, std::size_t r, int bits, double alpha,
                           std::vector<std::int32_t> codes) {
  QuantizedLayer q;
  q.out_dim = out;
  q.in_dim = in;
  q.bottleneck = r;
  q.table = QuantTable(bits, alpha);
  q.codes = std::move(codes);
  return q;
}

QuantizedNetwork random_model(Rng& rng, int bits) {
  QuantizedNetwork m;
  const std::size_t layers = 1 + rng.uniform_index(3);
  std::size_t in = 1 + rng.uniform_index(6);
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t out = 1 + rng.uniform_index(6);
    const std::size_t r = 1 + rng.uniform_index(std::min(out, in));
    std::vector<std::int32_t> codes((out + in) * r);
    const std::int32_t m_code = max_code(bits);
    for (auto& c : codes) {
      if (bits == 1) {
        c = rng.uniform() < 0.5 ? -1 : 1;
      } else {
        c = static_cast<std::int32_t>(rng.uniform_index(2 * m_code + 1)) - m_code;
      }
    }
    m.layers.push_back(make_qlayer(out, in, r, bits, rng.uniform(0.01, 2.0), codes));
    m.layers.back().cluster = l;
    in = out;
  }
  return m;
}

std::filesystem::path temp_dir() {
  auto p = std::filesystem::temp_directory_path() / "mpq_ckpt_test";
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("full-precision size arithmetic") {
  const auto base = static_cast<std::uint64_t>(fixtures::kBaselineParamsM * 1e6 + 0.5);
  const auto searched = static_cast<std::uint64_t>(fixtures::kSearchedParamsM * 1e6 + 0.5);
  CHECK(megabytes(full_precision_bytes(base)) == fixtures::kBaselineSizeMB);
  CHECK(megabytes(full_precision_bytes(searched)) == fixtures::kSearchedSizeMB);
  CHECK(model_size_bytes(QuantizedNetwork{}) == kHeaderBytes);
  CHECK(model_size_bytes(Network{}) == 0);
}

TEST_CASE("compression ratios") {
  CHECK(compression_ratio(fixtures::kSizeC, fixtures::kSizeD) == fixtures::kRatioCD);
  CHECK(compression_ratio(fixtures::kSizeA, fixtures::kSizeB) == fixtures::kRatioAB);
  CHECK(compression_ratio(7.0, 7.0) == 1.0);
  CHECK_THROWS_AS(compression_ratio(7.0, 0.0), ArgumentError);
  CHECK_THROWS_AS(compression_ratio(0.0, 7.0), ArgumentError);
}

TEST_CASE("quantized size itemization") {
  Rng rng(1);
  const QuantizedNetwork m = random_model(rng, 4);
  const SizeReport s = size_report(m);
  std::uint64_t total = s.header_bytes;
  for (std::size_t l = 0; l < s.layers.size(); ++l) {
    CHECK(s.layers[l].code_bytes == (m.layers[l].codes.size() * 4 + 7) / 8);
    CHECK(s.layers[l].overhead_bytes == 21);
    total += s.layers[l].code_bytes + s.layers[l].overhead_bytes;
  }
  CHECK(s.total_bytes == total);
  CHECK(s.total_bytes == model_size_bytes(m));
  CHECK(s.compression_ratio == round1(static_cast<double>(s.full_precision_bytes) / static_cast<double>(s.total_bytes)));
  CHECK(packed_code_bytes(9, 1) == 2);
  CHECK(packed_code_bytes(3, 16) == 6);
}

TEST_CASE("single 4-bit layer of 1000 parameters") {
  // out 20, in 30, r 20: 20*20 + 20*30 = 1000 parameters.
  const QuantizedLayer layer = make_qlayer(20, 30, 20, 4, 0.5, std::vector<std::int32_t>(1000, 3));
  QuantizedNetwork m;
  m.layers.push_back(layer);
  const auto bytes = encode_checkpoint(make_checkpoint(m));
  CHECK(bytes.size() == 10 + 12 + 1 + 8 + 500);
  CHECK(model_size_bytes(m) == bytes.size());
}

TEST_CASE("checkpoint bit layout") {
  QuantizedNetwork m;
  m.layers.push_back(make_qlayer(1, 2, 1, 4, 0.25, {1, -1, 2}));
  m.layers.push_back(make_qlayer(1, 1, 1, 1, 1.5, {-1, 1}));
  const auto bytes = encode_checkpoint(make_checkpoint(m));
  REQUIRE(bytes.size() == 10 + (21 + 2) + (21 + 1));
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "MPQ1");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  CHECK(bytes[6] == 2);
  CHECK(bytes[22] == 4);
  CHECK(bytes[31] == 0xF1);
  CHECK(bytes[32] == 0x02);
  CHECK(bytes[33 + 12] == 1);
  // 1-bit codes: bit 0 is -alpha, bit 1 is +alpha.
  CHECK(bytes[33 + 21] == 0x02);
}

TEST_CASE("checkpoint round trip") {
  Rng rng(2);
  for (int bits : kSupportedBits) {
    for (int trial = 0; trial < 10; ++trial) {
      const QuantizedNetwork m = random_model(rng, bits);
      const Checkpoint c = decode_checkpoint(encode_checkpoint(make_checkpoint(m)));
      REQUIRE(c.model.layers.size() == m.layers.size());
      for (std::size_t l = 0; l < m.layers.size(); ++l) {
        CHECK(c.model.layers[l].codes == m.layers[l].codes);
        CHECK(c.model.layers[l].table == m.layers[l].table);
        CHECK(c.model.layers[l].bottleneck == m.layers[l].bottleneck);
      }
      CHECK(!c.has_shadow());
    }
  }
}

TEST_CASE("checkpoint with shadow weights") {
  Rng rng(3);
  const std::vector<LayerSpec> specs{{6, 3, Activation::relu, {}}, {2, 2, Activation::identity, {}}};
  const Network net = init_network(4, specs, rng);
  const auto dir = temp_dir();
  write_checkpoint(make_checkpoint(net), dir / "net.ckpt");
  const Checkpoint c = read_checkpoint(dir / "net.ckpt");
  CHECK(c.has_shadow());
  const Network back = restore_network(c, specs);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    CHECK(back.layers[l].a == net.layers[l].a);
    CHECK(back.layers[l].b == net.layers[l].b);
    CHECK(back.layers[l].activation == net.layers[l].activation);
  }
  CHECK(std::filesystem::file_size(dir / "net.ckpt") == encoded_size(c));
  CHECK_THROWS_AS(read_checkpoint(dir / "missing.ckpt"), IoError);
}

TEST_CASE("checkpoint corruption") {
  Rng rng(4);
  const QuantizedNetwork m = random_model(rng, 4);
  const auto good = encode_checkpoint(make_checkpoint(m));

  auto magic = good;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(magic), MagicMismatchError);

  auto version = good;
  version[4] = 9;
  CHECK_THROWS_AS(decode_checkpoint(version), VersionMismatchError);

  for (std::size_t cut : {std::size_t{3}, std::size_t{9}, std::size_t{15}, good.size() - 1}) {
    const std::vector<std::uint8_t> shorter(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(cut));
    CHECK_THROWS_AS(decode_checkpoint(shorter), TruncatedError);
  }

  QuantizedNetwork one;
  one.layers.push_back(make_qlayer(1, 1, 1, 2, 1.0, {0, 0}));
  auto range = encode_checkpoint(make_checkpoint(one));
  range[31] = 0x02;  // two's complement -2 is outside {-1, 0, 1}
  CHECK_THROWS_AS(decode_checkpoint(range), CodeRangeError);

  auto bits = good;
  bits[22] = 3;
  CHECK_THROWS_AS(decode_checkpoint(bits), FormatError);

  auto trailing = good;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(trailing), FormatError);
}
