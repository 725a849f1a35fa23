#pragma once

#include <array>
#include <chrono>
#include <ctime>
#include <functional>
#include <map>
#include <new>
#include <optional>
#include <string>
#include <vector>

#include "spectranet/io.hpp"
#include "spectranet/stats.hpp"

namespace spectranet {

// ============================================================================
// Timing records
// ============================================================================

inline constexpr std::array<const char*, 12> kTimingColumns = {
    "model",       "params",          "batch_size", "latency_ms_median", "latency_ms_p25",
    "latency_ms_p75", "throughput_samples_per_sec", "peak_mem_mb", "device", "runtime_version",
    "timestamp",   "status"};

inline std::string timing_header() {
    std::string h;
    for (std::size_t i = 0; i < kTimingColumns.size(); ++i) h += (i ? "," : "") + std::string(kTimingColumns[i]);
    return h;
}

struct TimingRecord {
    std::string model;
    std::size_t params = 0;
    std::size_t batch_size = 0;
    double latency_ms_median = 0, latency_ms_p25 = 0, latency_ms_p75 = 0;
    double throughput_samples_per_sec = 0;
    std::optional<double> peak_mem_mb;
    std::string device, runtime_version, timestamp;
    std::string status = "ok";  // ok | oom | error

    std::string csv_row() const {
        return model + "," + std::to_string(params) + "," + std::to_string(batch_size) + "," +
               io::fmt(latency_ms_median) + "," + io::fmt(latency_ms_p25) + "," + io::fmt(latency_ms_p75) + "," +
               io::fmt(throughput_samples_per_sec) + "," + (peak_mem_mb ? io::fmt(*peak_mem_mb) : "") + "," +
               device + "," + runtime_version + "," + timestamp + "," + status;
    }
};

inline std::string timing_csv(const std::vector<TimingRecord>& rows) {
    std::string s = timing_header() + "\n";
    for (const auto& r : rows) s += r.csv_row() + "\n";
    return s;
}

struct LatencySummary {
    double median = 0, p25 = 0, p75 = 0;
};

inline LatencySummary summarize_latencies(const std::vector<double>& ms) {
    return {nearest_rank(ms, 0.5), nearest_rank(ms, 0.25), nearest_rank(ms, 0.75)};
}

// ============================================================================
// Harness
// ============================================================================

struct BenchConfig {
    std::vector<std::size_t> batch_sizes = {1, 4, 32};
    std::size_t warmup_iters = 20;
    std::size_t timed_iters = 50;
};

/// Peak resident set of this process in MB, if the platform reports it.
inline std::optional<double> peak_resident_mb() {
    std::ifstream in("/proc/self/status");
    std::string line;
    while (std::getline(in, line))
        if (line.rfind("VmHWM:", 0) == 0) return std::stod(line.substr(6)) / 1024.0;
    return std::nullopt;
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::string runtime_version() {
#if defined(__clang__)
    return "spectranet-0.1/clang-" __clang_version__;
#elif defined(__GNUC__)
    return "spectranet-0.1/gcc-" __VERSION__;
#else
    return "spectranet-0.1";
#endif
}

/// `prepare(batch)` allocates inputs for one batch size and returns the unit
/// of work (one full rollout). Warmup is re-run for every batch size.
using WorkloadFactory = std::function<std::function<void()>(std::size_t batch)>;

inline std::vector<TimingRecord> time_model(const std::string& name, std::size_t params,
                                            const WorkloadFactory& prepare, const BenchConfig& cfg,
                                            const std::string& device = "cpu") {
    if (cfg.timed_iters < 3) throw std::invalid_argument("bench: timed_iters must be >= 3");
    std::vector<TimingRecord> out;
    for (const std::size_t batch : cfg.batch_sizes) {
        TimingRecord rec{name, params, batch, 0, 0, 0, 0, std::nullopt, device, runtime_version(), utc_timestamp(), "ok"};
        try {
            auto work = prepare(batch);
            for (std::size_t i = 0; i < cfg.warmup_iters; ++i) work();
            std::vector<double> ms;
            ms.reserve(cfg.timed_iters);
            for (std::size_t i = 0; i < cfg.timed_iters; ++i) {
                const auto t0 = std::chrono::steady_clock::now();
                work();
                const auto t1 = std::chrono::steady_clock::now();
                ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
            }
            const auto s = summarize_latencies(ms);
            rec.latency_ms_median = s.median;
            rec.latency_ms_p25 = s.p25;
            rec.latency_ms_p75 = s.p75;
            rec.throughput_samples_per_sec = s.median > 0 ? double(batch) * 1000.0 / s.median : 0.0;
            rec.peak_mem_mb = peak_resident_mb();
        } catch (const std::bad_alloc&) {
            rec.status = "oom";
        }
        out.push_back(std::move(rec));
    }
    return out;
}

// ============================================================================
// Aggregation
// ============================================================================

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> f;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            f.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    f.push_back(cur);
    return f;
}

inline bool parses_as_number(const std::string& s) {
    if (s.empty()) return false;
    char* end = nullptr;
    std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

}  // namespace detail

struct CsvSource {
    std::string name;  // used in error messages
    std::string text;
};

/// Merges per-model timing CSVs into one table sorted by (model, batch_size).
/// A header that differs from the record schema is rejected with the column
/// diff; a malformed row is rejected with its source and line number.
inline std::string aggregate(const std::vector<CsvSource>& sources) {
    const std::vector<std::string> expected(kTimingColumns.begin(), kTimingColumns.end());
    std::vector<std::vector<std::string>> rows;
    for (const auto& src : sources) {
        std::istringstream in(src.text);
        std::string line;
        std::size_t lineno = 0;
        bool header = true;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (header) {
                const auto got = detail::split_csv_line(line);
                if (got != expected) {
                    std::string missing, extra;
                    for (const auto& c : expected)
                        if (std::find(got.begin(), got.end(), c) == got.end()) missing += " " + c;
                    for (const auto& c : got)
                        if (std::find(expected.begin(), expected.end(), c) == expected.end()) extra += " " + c;
                    throw std::invalid_argument(src.name + ": schema drift; missing [" + missing + " ] extra [" +
                                                extra + " ]" + (missing.empty() && extra.empty() ? " (column order)" : ""));
                }
                header = false;
                continue;
            }
            if (line.empty()) continue;
            auto f = detail::split_csv_line(line);
            const auto where = src.name + ":" + std::to_string(lineno);
            if (f.size() != expected.size())
                throw std::invalid_argument(where + ": expected " + std::to_string(expected.size()) + " fields, got " +
                                            std::to_string(f.size()));
            for (std::size_t c : {1, 2, 3, 4, 5, 6})
                if (!detail::parses_as_number(f[c]))
                    throw std::invalid_argument(where + ": column '" + expected[c] + "' is not numeric: '" + f[c] + "'");
            if (!f[7].empty() && !detail::parses_as_number(f[7]))
                throw std::invalid_argument(where + ": column 'peak_mem_mb' is not numeric: '" + f[7] + "'");
            rows.push_back(std::move(f));
        }
        if (header) throw std::invalid_argument(src.name + ": empty file (no header)");
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        if (a[0] != b[0]) return a[0] < b[0];
        return std::stoull(a[2]) < std::stoull(b[2]);
    });
    std::string out = timing_header() + "\n";
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + r[i];
        out += "\n";
    }
    return out;
}

}  // namespace spectranet
