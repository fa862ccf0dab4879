#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "iat/deployment.hpp"

namespace iat::bench {

enum class BenchOp { Execute, Read };
enum class TargetKind { InProcess, Localhost, Remote };

const char* to_string(BenchOp op);
const char* to_string(TargetKind target);

struct BenchSpec {
    BenchOp op = BenchOp::Execute;
    int n = 1000;
    int warmup = 100;  // excluded from the stats, recorded separately
    deploy::TableMode mode = deploy::TableMode::Dynamic;
    TargetKind target = TargetKind::Localhost;
    net::Address remote;                       // Remote target: a serving client endpoint
    std::optional<model::ResourcePath> path;   // default: the BenchProbe resource for op
    coap::ExchangeConfig exchange;
};

struct LatencyStats {
    double min_ms = 0;
    double max_ms = 0;
    double avg_ms = 0;
    double stddev_ms = 0;  // population standard deviation
    std::vector<double> samples_ms;
    std::vector<double> warmup_ms;

    static LatencyStats from_samples(std::vector<double> samples, std::vector<double> warmup = {});
};

// Issues warmup + n sequential operations, timestamping immediately before
// send and immediately after response delivery. Throws Error when a round
// trip times out mid-run (the run is aborted, per the harness contract).
LatencyStats run_bench(const BenchSpec& spec);

struct BenchRun {
    deploy::TableMode mode;
    LatencyStats stats;
};

struct EquivalenceReport {
    int probes = 0;
    std::vector<std::string> mismatches;
    bool ok() const { return mismatches.empty(); }
};

struct CompareReport {
    BenchOp op = BenchOp::Execute;
    TargetKind target = TargetKind::Localhost;
    std::vector<BenchRun> runs;
    EquivalenceReport equivalence;
};

// Runs every requested mode with an identical spec and asserts functional
// equivalence: for the full plant descriptor set, static and dynamic tables
// expose identical key sets and every readable path returns byte-identical
// payloads. A payload mismatch throws Error.
CompareReport compare_modes(const BenchSpec& spec, const std::vector<deploy::TableMode>& modes);

// Equivalence check alone (used by the acceptance suite).
EquivalenceReport probe_equivalence();

struct ReportFiles {
    std::filesystem::path summary;
    std::filesystem::path histogram;
    std::filesystem::path series;
};

inline constexpr double kHistogramBinMs = 0.1;

ReportFiles emit_report(const CompareReport& report, const std::filesystem::path& out_dir);

// Recomputes the summary rows from the emitted series CSV; returns a list of
// discrepancies (empty when the report is self-consistent).
std::vector<std::string> verify_report(const ReportFiles& files);

std::string render_summary_row(const std::string& mode, BenchOp op, TargetKind target,
                               const LatencyStats& stats);

}  // namespace iat::bench
