#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pamlab/cli/config.hpp"
#include "pamlab/cli/criteria.hpp"
#include "pamlab/cli/record.hpp"
#include "pamlab/cli/suites.hpp"
#include "pamlab/parallel.hpp"

namespace pamlab::cli {

inline constexpr int kExitPass = 0;
inline constexpr int kExitFail = 1;
inline constexpr int kExitInconclusive = 2;
inline constexpr int kExitConfig = 64;
inline constexpr int kExitRuntime = 70;

struct RunOptions {
    std::optional<std::filesystem::path> out;
    std::optional<int> threads;
    std::optional<std::uint64_t> seed;
};

// Runs one parsed experiment. The record does not depend on `threads`.
inline ResultRecord execute(const ExperimentConfig& c, int threads) {
    const auto start = std::chrono::steady_clock::now();
    ResultRecord r;
    r.experiment = kind_name(c.kind);
    r.id = c.id;
    r.config = c.effective();
    r.config_hash = config_hash(r.config);
    switch (c.kind) {
        case Kind::verify_geometry: r.outcome = suite_geometry(c, threads); break;
        case Kind::verify_kernels: r.outcome = suite_kernels(c, threads); break;
        case Kind::verify_noise: r.outcome = suite_noise(c, threads); break;
        case Kind::verify_integrals: r.outcome = suite_integrals(c, threads); break;
        case Kind::moments: r.outcome = suite_moments(c, threads); break;
        case Kind::simulate: r.outcome = suite_simulate(c, threads); break;
        case Kind::intermittency: r.outcome = suite_intermittency(c, threads); break;
        case Kind::compare: r.outcome = suite_compare(c, threads); break;
        case Kind::holder: r.outcome = suite_holder(c, threads); break;
        case Kind::report: throw Error("cli", "report is not a suite");
    }
    for (const auto& v : r.outcome.verdicts)
        if (!is_registered(v.criterion)) throw Error("cli", "verdict names unregistered criterion '" + v.criterion + "'");
    r.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

// ---- report ----------------------------------------------------------------

struct MatrixRow {
    std::string claim, criterion, experiment, id, config_hash, status, detail, source;
};

inline std::vector<MatrixRow> collect_matrix(const std::filesystem::path& dir, std::ostream& err) {
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(dir))
        for (const auto& entry : std::filesystem::recursive_directory_iterator(dir))
            if (entry.is_regular_file() && entry.path().filename() == "results.json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::vector<MatrixRow> rows;
    for (const auto& f : files) {
        json j;
        try {
            j = json::parse(read_file(f));
            for (const auto& v : j.at("verdicts")) {
                const std::string criterion = v.at("criterion").get<std::string>();
                const auto claim = claim_of(criterion);
                rows.push_back({claim.empty() ? "(unregistered)" : std::string(claim), criterion, j.at("experiment").get<std::string>(),
                                j.at("id").get<std::string>(), j.at("config_hash").get<std::string>(), v.at("status").get<std::string>(),
                                v.at("detail").get<std::string>(), std::filesystem::relative(f, dir).generic_string()});
            }
        } catch (const std::exception& e) {
            err << "pam-lab report: skipping " << f.string() << ": " << e.what() << "\n";
        }
    }
    return rows;
}

inline Table matrix_table(const std::vector<MatrixRow>& rows) {
    Table t{"traceability", {"claim", "criterion", "experiment", "id", "config_hash", "status", "detail", "source"}, {}};
    for (const auto& r : rows) t.rows.push_back({r.claim, r.criterion, r.experiment, r.id, r.config_hash, r.status, r.detail, r.source});
    return t;
}

inline std::string matrix_text(const std::vector<MatrixRow>& rows) {
    std::map<std::string, std::size_t> counts{{"pass", 0}, {"fail", 0}, {"inconclusive", 0}};
    std::string out = "Traceability matrix: claim -> criterion -> experiment -> verdict\n\n";
    for (const auto& r : rows) {
        ++counts[r.status];
        out += "[" + r.status + "] " + r.criterion + " <- " + r.experiment + " (" + r.id + ")\n";
        out += "    claim:  " + r.claim + "\n";
        out += "    detail: " + r.detail + "\n";
    }
    out += "\n" + std::to_string(rows.size()) + " rows: " + std::to_string(counts["pass"]) + " pass, " + std::to_string(counts["fail"]) +
           " fail, " + std::to_string(counts["inconclusive"]) + " inconclusive\n";
    return out;
}

inline int report_command(const std::filesystem::path& dir, std::ostream& out, std::ostream& err) {
    try {
        const auto rows = collect_matrix(dir, err);
        const std::string text = matrix_text(rows);
        if (std::filesystem::is_directory(dir)) {
            write_atomic(dir / "traceability.csv", to_csv(matrix_table(rows)));
            write_atomic(dir / "traceability.txt", text);
        }
        out << text;
        return kExitPass;
    } catch (const std::exception& e) {
        err << "pam-lab report: [cli] " << e.what() << "\n";
        return kExitRuntime;
    }
}

// ---- run -------------------------------------------------------------------

inline std::filesystem::path output_dir(const ExperimentConfig& c, const RunOptions& opt) {
    if (opt.out) return *opt.out;
    if (c.output) return *c.output;
    return std::filesystem::path("results") / c.id;
}

inline int run_command(const std::filesystem::path& config_path, const RunOptions& opt, std::ostream& out, std::ostream& err) {
    ExperimentConfig c;
    int threads = 1;
    try {
        std::string text;
        try {
            text = read_file(config_path);
        } catch (const Error& e) {
            throw ConfigError("", e.what());
        }
        c = load_config(text, opt.seed);
        validate_semantics(c);
        if (c.kind == Kind::report) return report_command(c.results_dir, out, err);
        threads = opt.threads ? *opt.threads : (c.threads ? *c.threads : resolve_threads());
        if (threads < 1) throw ConfigError("--threads", "must be >= 1");
    } catch (const ConfigError& e) {
        err << "pam-lab: invalid config " << config_path.string() << ": " << e.what() << "\n";
        return kExitConfig;
    } catch (const Error& e) {
        // Thread-count parsing from PAM_LAB_THREADS lands here.
        err << "pam-lab: invalid config: [" << e.module() << "] " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "pam-lab: invalid config " << config_path.string() << ": " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        const ResultRecord r = execute(c, threads);
        const auto dir = output_dir(c, opt);
        write_record(r, dir);
        for (const auto& v : r.outcome.verdicts) out << status_name(v.status) << "  " << v.criterion << "  " << v.detail << "\n";
        out << r.id << ": " << r.count(Status::pass) << " pass, " << r.count(Status::fail) << " fail, " << r.count(Status::inconclusive)
            << " inconclusive -> " << dir.string() << "\n";
        return r.exit_code();
    } catch (const ConfigError& e) {
        err << "pam-lab: invalid config " << config_path.string() << ": " << e.what() << "\n";
        return kExitConfig;
    } catch (const Error& e) {
        err << "pam-lab: runtime error: [" << e.module() << "] " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << "pam-lab: runtime error: [cli] " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace pamlab::cli
