#include "iat/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace iat::bench {

namespace fs = std::filesystem;
using model::ResourcePath;

const char* to_string(BenchOp op) { return op == BenchOp::Execute ? "EXECUTE" : "READ"; }

const char* to_string(TargetKind target) {
    switch (target) {
        case TargetKind::InProcess: return "inproc";
        case TargetKind::Localhost: return "localhost";
        case TargetKind::Remote: return "remote";
    }
    return "?";
}

namespace {

std::string fmt(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

ResourcePath default_path(BenchOp op) {
    return op == BenchOp::Execute ? ResourcePath::resource(16700, 0, 1)
                                  : ResourcePath::resource(16700, 0, 0);
}

struct Target {
    std::unique_ptr<deploy::Deployment> deployment;  // owned for local targets
    std::unique_ptr<lwm2m::Lwm2mServer> remote_server;
    lwm2m::Lwm2mServer* server = nullptr;
    lwm2m::RegistrationEntry entry;
};

Target make_target(const BenchSpec& spec, deploy::TableMode mode) {
    Target target;
    if (spec.target == TargetKind::Remote) {
        target.remote_server = std::make_unique<lwm2m::Lwm2mServer>(
            net::make_udp_socket("127.0.0.1", 0), spec.exchange);
        target.server = target.remote_server.get();
        target.entry.endpoint_name = "remote";
        target.entry.peer = spec.remote;
        return target;
    }
    deploy::DeploymentConfig config;
    config.mode = mode;
    config.transport = spec.target == TargetKind::InProcess ? deploy::TransportKind::InProc
                                                            : deploy::TransportKind::Udp;
    config.exchange = spec.exchange;
    // The endpoint under test is registered but idle: real clock, no stepper.
    config.clock = plant::Clock::make_real();
    config.start_driver = false;
    target.deployment = std::make_unique<deploy::Deployment>(std::move(config));
    target.server = &target.deployment->server();

    auto path = spec.path.value_or(default_path(spec.op));
    auto component = target.deployment->component_for_object(path.object_id);
    auto entry = target.server->find_registration(component);
    if (!entry) throw Error("bench target " + component + " is not registered");
    target.entry = *entry;
    return target;
}

LatencyStats measure(const BenchSpec& spec, Target& target) {
    auto path = spec.path.value_or(default_path(spec.op));
    std::vector<double> warmup;
    std::vector<double> samples;
    warmup.reserve(spec.warmup);
    samples.reserve(spec.n);
    for (int i = 0; i < spec.warmup + spec.n; ++i) {
        auto before = std::chrono::steady_clock::now();
        lwm2m::Response response = spec.op == BenchOp::Execute
                                       ? target.server->execute(target.entry, path)
                                       : target.server->read(target.entry, path);
        auto after = std::chrono::steady_clock::now();
        if (!response.ok()) {
            throw Error("bench run aborted at op " + std::to_string(i) + ": " +
                        (response.status == coap::RequestStatus::Ok
                             ? "response " + response.code_text()
                             : std::string("timeout")));
        }
        double ms = std::chrono::duration<double, std::milli>(after - before).count();
        (i < spec.warmup ? warmup : samples).push_back(ms);
    }
    return LatencyStats::from_samples(std::move(samples), std::move(warmup));
}

}  // namespace

LatencyStats LatencyStats::from_samples(std::vector<double> samples, std::vector<double> warmup) {
    LatencyStats stats;
    stats.samples_ms = std::move(samples);
    stats.warmup_ms = std::move(warmup);
    if (stats.samples_ms.empty()) return stats;
    stats.min_ms = *std::min_element(stats.samples_ms.begin(), stats.samples_ms.end());
    stats.max_ms = *std::max_element(stats.samples_ms.begin(), stats.samples_ms.end());
    double sum = 0;
    for (double v : stats.samples_ms) sum += v;
    stats.avg_ms = sum / static_cast<double>(stats.samples_ms.size());
    double sq = 0;
    for (double v : stats.samples_ms) sq += (v - stats.avg_ms) * (v - stats.avg_ms);
    stats.stddev_ms = std::sqrt(sq / static_cast<double>(stats.samples_ms.size()));
    return stats;
}

LatencyStats run_bench(const BenchSpec& spec) {
    if (spec.n <= 0) throw Error("bench n must be positive");
    auto target = make_target(spec, spec.mode);
    return measure(spec, target);
}

EquivalenceReport probe_equivalence() {
    EquivalenceReport report;

    deploy::DeploymentConfig static_config;
    static_config.mode = deploy::TableMode::Static;
    static_config.clock = plant::Clock::make_real();
    static_config.start_driver = false;
    deploy::Deployment static_deploy(std::move(static_config));

    deploy::DeploymentConfig dynamic_config;
    dynamic_config.mode = deploy::TableMode::Dynamic;
    dynamic_config.clock = plant::Clock::make_real();
    dynamic_config.start_driver = false;
    deploy::Deployment dynamic_deploy(std::move(dynamic_config));

    for (const auto& name : static_deploy.component_names()) {
        const auto& static_table = static_deploy.table(name);
        const auto& dynamic_table = dynamic_deploy.table(name);
        if (static_table.key_set() != dynamic_table.key_set()) {
            report.mismatches.push_back(name + ": table key sets differ");
            continue;
        }
        for (const auto& [key, entry] : static_table.entries()) {
            const auto& other = dynamic_table.entries().at(key);
            if (!(entry.descriptor == other.descriptor)) {
                report.mismatches.push_back(name + ": descriptor metadata differs at /" +
                                            std::to_string(std::get<0>(key)) + "/" +
                                            std::to_string(std::get<1>(key)) + "/" +
                                            std::to_string(std::get<2>(key)));
            }
        }

        auto static_entry = static_deploy.server().find_registration(name);
        auto dynamic_entry = dynamic_deploy.server().find_registration(name);
        if (!static_entry || !dynamic_entry) {
            report.mismatches.push_back(name + ": missing registration");
            continue;
        }
        for (const auto& [key, entry] : static_table.entries()) {
            const auto& [object_id, instance_id, resource_id] = key;
            // probe every operation that is side-effect free at the wire level
            auto path = ResourcePath::resource(object_id, instance_id, resource_id);
            if (!entry.descriptor.operations.read) continue;
            auto a = static_deploy.server().read(*static_entry, path);
            auto b = dynamic_deploy.server().read(*dynamic_entry, path);
            ++report.probes;
            if (a.code != b.code || a.payload != b.payload) {
                report.mismatches.push_back(name + ": payload mismatch at " + path.render() +
                                            " (" + a.code_text() + " vs " + b.code_text() + ")");
            }
        }
    }
    return report;
}

CompareReport compare_modes(const BenchSpec& spec, const std::vector<deploy::TableMode>& modes) {
    CompareReport report;
    report.op = spec.op;
    report.target = spec.target;
    for (auto mode : modes) {
        BenchSpec mode_spec = spec;
        mode_spec.mode = mode;
        auto target = make_target(mode_spec, mode);
        report.runs.push_back(BenchRun{mode, measure(mode_spec, target)});
    }
    if (spec.target != TargetKind::Remote && modes.size() > 1) {
        report.equivalence = probe_equivalence();
        if (!report.equivalence.ok()) {
            throw Error("mode equivalence failure: " + report.equivalence.mismatches.front());
        }
    }
    return report;
}

std::string render_summary_row(const std::string& mode, BenchOp op, TargetKind target,
                               const LatencyStats& stats) {
    return mode + "," + to_string(op) + "," + to_string(target) + "," + fmt(stats.min_ms) + "," +
           fmt(stats.max_ms) + "," + fmt(stats.avg_ms) + "," + fmt(stats.stddev_ms);
}

ReportFiles emit_report(const CompareReport& report, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    ReportFiles files{out_dir / "summary.csv", out_dir / "histogram.csv", out_dir / "series.csv"};

    {
        std::ofstream out(files.summary, std::ios::binary);
        out << "mode,op,target,min,max,avg,stddev\n";
        for (const auto& run : report.runs) {
            out << render_summary_row(deploy::to_string(run.mode), report.op, report.target,
                                      run.stats)
                << "\n";
        }
        for (const auto& run : report.runs) {
            if (run.stats.warmup_ms.empty()) continue;
            auto warmup = LatencyStats::from_samples(run.stats.warmup_ms);
            out << render_summary_row(std::string(deploy::to_string(run.mode)) + "-warmup",
                                      report.op, report.target, warmup)
                << "\n";
        }
    }

    {
        // fixed 0.1 ms bins covering [floor(min), ceil(max)] across all modes
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (const auto& run : report.runs) {
            lo = std::min(lo, run.stats.min_ms);
            hi = std::max(hi, run.stats.max_ms);
        }
        if (!std::isfinite(lo)) lo = hi = 0;
        double start = std::floor(lo);
        double end = std::ceil(hi);
        auto bins = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround((end - start) / kHistogramBinMs)));
        std::ofstream out(files.histogram, std::ios::binary);
        out << "bin_start_ms";
        for (const auto& run : report.runs) out << "," << deploy::to_string(run.mode);
        out << "\n";
        for (std::size_t b = 0; b < bins; ++b) {
            double bin_start = start + static_cast<double>(b) * kHistogramBinMs;
            bool last = b + 1 == bins;  // the last bin closes the covered range
            out << fmt(bin_start);
            for (const auto& run : report.runs) {
                std::size_t count = 0;
                for (double v : run.stats.samples_ms) {
                    if (v >= bin_start &&
                        (v < bin_start + kHistogramBinMs ||
                         (last && v <= bin_start + kHistogramBinMs))) {
                        ++count;
                    }
                }
                out << "," << count;
            }
            out << "\n";
        }
    }

    {
        std::ofstream out(files.series, std::ios::binary);
        out << "op_index";
        for (const auto& run : report.runs) out << "," << deploy::to_string(run.mode);
        out << "\n";
        std::size_t rows = 0;
        for (const auto& run : report.runs) rows = std::max(rows, run.stats.samples_ms.size());
        for (std::size_t i = 0; i < rows; ++i) {
            out << i;
            for (const auto& run : report.runs) {
                out << ",";
                if (i < run.stats.samples_ms.size()) out << fmt(run.stats.samples_ms[i]);
            }
            out << "\n";
        }
    }
    return files;
}

std::vector<std::string> verify_report(const ReportFiles& files) {
    std::vector<std::string> problems;
    auto read_lines = [](const fs::path& path) {
        std::ifstream in(path, std::ios::binary);
        std::vector<std::string> lines;
        std::string line;
        while (std::getline(in, line)) lines.push_back(line);
        return lines;
    };
    auto split = [](const std::string& line) {
        std::vector<std::string> fields;
        std::size_t pos = 0;
        while (true) {
            auto comma = line.find(',', pos);
            fields.push_back(line.substr(pos, comma == std::string::npos ? std::string::npos
                                                                         : comma - pos));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        return fields;
    };

    auto series_lines = read_lines(files.series);
    if (series_lines.empty()) return {"series.csv is empty"};
    auto header = split(series_lines[0]);
    std::map<std::string, std::vector<double>> samples_by_mode;
    for (std::size_t i = 1; i < series_lines.size(); ++i) {
        auto fields = split(series_lines[i]);
        for (std::size_t c = 1; c < fields.size() && c < header.size(); ++c) {
            if (fields[c].empty()) continue;
            double v = 0;
            auto [ptr, ec] =
                std::from_chars(fields[c].data(), fields[c].data() + fields[c].size(), v);
            if (ec != std::errc()) {
                problems.push_back("bad sample in series.csv row " + std::to_string(i));
                continue;
            }
            samples_by_mode[header[c]].push_back(v);
        }
    }

    auto summary_lines = read_lines(files.summary);
    for (std::size_t i = 1; i < summary_lines.size(); ++i) {
        auto fields = split(summary_lines[i]);
        if (fields.size() != 7) {
            problems.push_back("summary row " + std::to_string(i) + " malformed");
            continue;
        }
        const std::string& mode = fields[0];
        if (mode.size() > 7 && mode.substr(mode.size() - 7) == "-warmup") continue;
        auto it = samples_by_mode.find(mode);
        if (it == samples_by_mode.end()) {
            problems.push_back("summary mode " + mode + " missing from series.csv");
            continue;
        }
        auto stats = LatencyStats::from_samples(it->second);
        std::string expect = fmt(stats.min_ms) + "," + fmt(stats.max_ms) + "," +
                             fmt(stats.avg_ms) + "," + fmt(stats.stddev_ms);
        std::string got = fields[3] + "," + fields[4] + "," + fields[5] + "," + fields[6];
        if (expect != got) {
            problems.push_back("summary row for " + mode + " does not match recomputed stats (" +
                               got + " vs " + expect + ")");
        }
    }
    return problems;
}

}  // namespace iat::bench
