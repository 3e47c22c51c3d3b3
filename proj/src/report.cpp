// Copyright 2026 The mpq Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpq/report.hpp"

#include <cstdio>
#include <sstream>

#include "mpq/io.hpp"

namespace mpq {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9e", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

std::string format_report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream o;
  o << kReportCsvHeader << '\n';
  for (const auto& r : rows) {
    o << r.layer << ',' << r.bits << ',' << r.params << ',' << r.bytes << ',';
    if (r.omega_kl) o << sci(*r.omega_kl);
    o << ',';
    if (r.omega_hes) o << sci(*r.omega_hes);
    o << '\n';
  }
  return o.str();
}

std::string format_summary(const RunSummary& s) {
  std::ostringstream o;
  o << "experiment: " << s.name << "\n";
  o << "seed: " << s.seed << "\n";
  o << "layer widths: " << join(s.out_dims) << "\n";
  o << "bottlenecks: " << join(s.bottlenecks) << "\n";
  o << "parameters: " << s.params << "\n";
  o << "full-precision size: " << s.full_precision_bytes << " bytes (" << fixed(megabytes(s.full_precision_bytes), 6)
    << " MB)\n";
  o << "full-precision accuracy: " << fixed(s.full_precision_accuracy, 4) << "\n";
  if (!s.quantized) {
    o << "quantization: disabled\n";
    return o.str();
  }
  std::vector<int> bits;
  for (const auto& l : s.size.layers) bits.push_back(l.bits);
  o << "allocation: " << s.allocation << " (target " << fixed(s.target_bits, 2) << " bits)\n";
  o << "fine-tuning: " << s.scheme << "\n";
  o << "layer bits: " << join(bits) << "\n";
  o << "average bits: " << fixed(s.size.weighted_average_bits, 4) << " weighted, "
    << fixed(s.size.unweighted_average_bits, 4) << " per layer\n";
  o << "quantized size: " << s.size.total_bytes << " bytes (" << fixed(megabytes(s.size.total_bytes), 6)
    << " MB)\n";
  std::uint64_t codes = 0;
  std::uint64_t overhead = 0;
  for (const auto& l : s.size.layers) {
    codes += l.code_bytes;
    overhead += l.overhead_bytes;
  }
  o << "  codes: " << codes << " bytes\n";
  o << "  layer records: " << overhead << " bytes\n";
  o << "  header: " << s.size.header_bytes << " bytes\n";
  o << "compression ratio: " << fixed(s.size.compression_ratio, 1) << "\n";
  o << "quantized accuracy: " << fixed(s.quantized_accuracy, 4) << "\n";
  o << "fine-tuned accuracy: " << fixed(s.final_accuracy, 4) << "\n";
  return o.str();
}

void write_report(const std::filesystem::path& dir, const std::vector<ReportRow>& rows,
                  const RunSummary& summary) {
  write_file_atomic(dir / "report.csv", format_report_csv(rows));
  write_file_atomic(dir / "summary.txt", format_summary(summary));
}

}  // namespace mpq
