// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mpq/model.hpp"
#include "mpq/quant.hpp"

namespace mpq {

inline constexpr std::uint16_t kCheckpointVersion = 1;

/// Packed model file.
///
/// Layout, all integers little-endian:
///   "MPQ1" | u16 version | u32 layer count
///   per layer: u32 out_dim | u32 in_dim | u32 r | u8 bits | f64 alpha |
///              codes (A then B, row-major), `bits`-bit two's complement,
///              LSB-first, zero-padded to a byte boundary
///   optional: "SHDW" | per layer, f64 values of A then B
/// At one bit a set bit stores +alpha and a clear bit -alpha.
struct Checkpoint {
  std::uint16_t version = kCheckpointVersion;
  /// Decoded layers carry identity activations and no context; see apply_layer_specs.
  QuantizedNetwork model;
  /// Full-precision factors per layer (A then B), empty when absent.
  std::vector<Tensor> shadow;

  bool has_shadow() const { return !shadow.empty(); }
};

Checkpoint make_checkpoint(const QuantizedNetwork& model, const Network* shadow = nullptr);
/// Full-precision network stored as 16-bit codes plus its exact shadow.
Checkpoint make_checkpoint(const Network& net);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
std::uint64_t encoded_size(const Checkpoint& ckpt);

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Restores activations and contexts (not part of the file) from layer specs.
void apply_layer_specs(QuantizedNetwork& model, std::span<const LayerSpec> specs);
/// The shadow network when present, otherwise the dequantized model.
Network restore_network(const Checkpoint& ckpt, std::span<const LayerSpec> specs);

}  // namespace mpq
