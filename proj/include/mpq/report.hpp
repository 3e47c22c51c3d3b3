// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mpq/size.hpp"

namespace mpq {

/// One row of the per-layer table. Omega values are for the layer's chosen
/// bit-width and are empty when not computed.
struct ReportRow {
  std::size_t layer = 0;
  int bits = 0;
  std::uint64_t params = 0;
  std::uint64_t bytes = 0;
  std::optional<double> omega_kl;
  std::optional<double> omega_hes;
};

inline constexpr const char* kReportCsvHeader = "layer,bits,params,bytes,omega_kl,omega_hes";

std::string format_report_csv(const std::vector<ReportRow>& rows);

struct RunSummary {
  std::string name;
  std::uint64_t seed = 0;
  std::vector<std::size_t> out_dims;
  std::vector<std::size_t> bottlenecks;
  std::uint64_t params = 0;
  std::uint64_t full_precision_bytes = 0;
  double full_precision_accuracy = 0.0;
  bool quantized = false;
  std::string allocation;
  std::string scheme;
  double target_bits = 0.0;
  SizeReport size;
  double quantized_accuracy = 0.0;  // before fine-tuning
  double final_accuracy = 0.0;
};

std::string format_summary(const RunSummary& s);

/// Writes report.csv and summary.txt atomically into `dir`.
void write_report(const std::filesystem::path& dir, const std::vector<ReportRow>& rows,
                  const RunSummary& summary);

}  // namespace mpq
