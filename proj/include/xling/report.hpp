// Run reports: per-seed metric rows, mean/std aggregation, line-delimited
// JSON for machines, and a rendered text table for the terminal. Wall-clock
// time is confined to the single "run" line so reruns can be compared after
// dropping that one key.

#ifndef XLING_REPORT_HPP
#define XLING_REPORT_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

namespace xling {

struct SeedMetrics {
    std::uint64_t seed = 0;
    std::map<std::string, double> values;
};

struct Aggregate {
    std::map<std::string, double> mean, stddev;  // population deviation over seeds
};

inline Aggregate aggregate(const std::vector<SeedMetrics>& entries) {
    Aggregate out;
    if (entries.empty()) return out;
    const double n = static_cast<double>(entries.size());
    for (const SeedMetrics& e : entries)
        for (const auto& [k, v] : e.values) out.mean[k] += v / n;
    for (const SeedMetrics& e : entries)
        for (const auto& [k, v] : e.values) {
            const double d = v - out.mean[k];
            out.stddev[k] += d * d / n;
        }
    for (auto& [k, v] : out.stddev) v = std::sqrt(v);
    return out;
}

struct RunReport {
    std::string command;
    nlohmann::json config;
    std::vector<SeedMetrics> entries;
    double wall_seconds = 0.0;

    // One JSON object per line: the run header, then each seed, then the
    // aggregate. Key order is stable, so identical runs serialize
    // identically apart from wall_seconds.
    void write_jsonl(std::ostream& os) const {
        nlohmann::json head;
        head["kind"] = "run";
        head["command"] = command;
        head["config"] = config;
        head["wall_seconds"] = wall_seconds;
        os << head.dump() << '\n';
        for (const SeedMetrics& e : entries) {
            nlohmann::json row;
            row["kind"] = "seed";
            row["seed"] = e.seed;
            row["metrics"] = e.values;
            os << row.dump() << '\n';
        }
        const Aggregate agg = aggregate(entries);
        nlohmann::json tail;
        tail["kind"] = "aggregate";
        tail["n"] = entries.size();
        tail["mean"] = agg.mean;
        tail["std"] = agg.stddev;
        os << tail.dump() << '\n';
    }

    void write_jsonl_file(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw std::runtime_error(path + ": cannot open for writing");
        write_jsonl(os);
        if (!os) throw std::runtime_error(path + ": write failed");
    }

    // fixed-width table: one row per seed, then mean and std rows
    std::string table() const {
        std::vector<std::string> cols;
        for (const SeedMetrics& e : entries)
            for (const auto& [k, v] : e.values)
                if (std::find(cols.begin(), cols.end(), k) == cols.end()) cols.push_back(k);
        std::vector<int> widths;
        for (const auto& c : cols)
            widths.push_back(std::max<int>(12, static_cast<int>(c.size()) + 2));
        std::ostringstream os;
        os << std::left << std::setw(8) << "seed";
        for (std::size_t i = 0; i < cols.size(); ++i)
            os << std::right << std::setw(widths[i]) << cols[i];
        os << '\n';
        auto row = [&](const std::string& label, const std::map<std::string, double>& vals) {
            os << std::left << std::setw(8) << label;
            for (std::size_t i = 0; i < cols.size(); ++i) {
                auto it = vals.find(cols[i]);
                if (it == vals.end())
                    os << std::right << std::setw(widths[i]) << "-";
                else
                    os << std::right << std::setw(widths[i]) << std::fixed << std::setprecision(4)
                       << it->second;
            }
            os << '\n';
        };
        for (const SeedMetrics& e : entries) row(std::to_string(e.seed), e.values);
        const Aggregate agg = aggregate(entries);
        row("mean", agg.mean);
        row("std", agg.stddev);
        return os.str();
    }
};

}  // namespace xling

#endif  // XLING_REPORT_HPP
