#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scramblesuit/common.hpp"

namespace scramblesuit::flowstats {

enum class Direction { C2S, S2C };

struct FlowRecord {
  std::int64_t timestamp_us = 0;
  Direction direction = Direction::C2S;
  std::uint32_t wire_bytes = 0;
};

struct FlowTrace {
  std::vector<FlowRecord> records;

  void add(std::int64_t t_us, Direction dir, std::uint32_t bytes);
  std::vector<double> lengths(Direction dir) const;
  std::vector<double> inter_arrival_ms(Direction dir) const;
};

/// Empirical CDF as a step function: sorted support and cumulative fractions.
struct Ecdf {
  std::vector<double> support;
  std::vector<double> cumulative;

  /// F(x), right-continuous.
  double at(double x) const;
};

Ecdf ecdf(std::vector<double> samples);

struct KsResult {
  double statistic = 0.0;
  bool reject = false;
};

/// Two-sample Kolmogorov-Smirnov test with the asymptotic critical value.
KsResult ks_two_sample(const std::vector<double>& a,
                       const std::vector<double>& b, double alpha);

constexpr std::uint32_t kSegmentHeaderBytes = 40;  // simulated IP + TCP

struct OverheadReport {
  double goodput_bytes_per_sec = 0.0;
  double c2s_kbytes = 0.0;
  double s2c_kbytes = 0.0;
  double total_overhead = 0.0;
};

OverheadReport overhead_report(const FlowTrace& trace,
                               std::uint64_t app_bytes_delivered);

/// One in-memory client/server transfer: `size` application bytes pushed
/// C->S and echoed back, traced with a virtual clock.
struct TrialResult {
  FlowTrace trace;
  OverheadReport report;
  bool payload_intact = false;
};

TrialResult run_flow_trial(std::uint64_t size, const Bytes& seed32,
                           std::uint32_t app_chunk_bytes = 586);

struct RunConfig {
  std::uint64_t size = 1000000;
  std::uint32_t trials = 5;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
};

/// Full harness run: traces, ECDF tables, pairwise K-S tests and overhead
/// accounting, written as trace-*.ndjson, ecdf-*.tsv and report.json.
int run_harness(const RunConfig& config);

Bytes trial_seed(std::uint64_t base_seed, std::uint32_t trial);

}  // namespace scramblesuit::flowstats
