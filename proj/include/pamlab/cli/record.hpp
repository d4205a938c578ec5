#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pamlab/errors.hpp"
#include "pamlab/numerics.hpp"

namespace pamlab::cli {

using json = nlohmann::json;

enum class Status { pass, fail, inconclusive };

inline const char* status_name(Status s) {
    switch (s) {
        case Status::pass: return "pass";
        case Status::fail: return "fail";
        case Status::inconclusive: return "inconclusive";
    }
    return "fail";
}

inline Status parse_status(const std::string& s) {
    if (s == "pass") return Status::pass;
    if (s == "fail") return Status::fail;
    if (s == "inconclusive") return Status::inconclusive;
    throw InvalidInput("cli", "unknown verdict status '" + s + "'");
}

// One pass/fail/inconclusive outcome tied to a named criterion.
struct Verdict {
    std::string criterion;
    Status status = Status::fail;
    std::string detail;
};

using Cell = std::variant<double, std::int64_t, std::string>;

struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;
};

// What a suite produces; the runner adds identity and writes it out.
struct Outcome {
    json scalars = json::object();
    std::vector<Table> tables;
    std::vector<Verdict> verdicts;
    std::vector<std::pair<std::string, std::string>> files;  // extra artifacts: name, bytes

    void verdict(std::string criterion, bool ok, std::string detail) {
        verdicts.push_back({std::move(criterion), ok ? Status::pass : Status::fail, std::move(detail)});
    }

    void inconclusive(std::string criterion, std::string detail) {
        verdicts.push_back({std::move(criterion), Status::inconclusive, std::move(detail)});
    }

    void append(Outcome other) {
        for (auto& [k, v] : other.scalars.items()) scalars[k] = v;
        for (auto& t : other.tables) tables.push_back(std::move(t));
        for (auto& v : other.verdicts) verdicts.push_back(std::move(v));
        for (auto& f : other.files) files.push_back(std::move(f));
    }
};

// Shortest round-trip decimal form; locale-independent, '.' decimal point.
inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline std::string format_cell(const Cell& c) {
    if (const auto* d = std::get_if<double>(&c)) return format_number(*d);
    if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
    return std::get<std::string>(c);
}

// RFC 4180: CRLF line ends, fields quoted when they hold a comma, quote or line break.
inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string to_csv(const Table& t) {
    std::string out;
    auto line = [&](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out += ',';
            out += csv_field(fields[i]);
        }
        out += "\r\n";
    };
    line(t.columns);
    for (const auto& row : t.rows) {
        std::vector<std::string> f;
        for (const auto& c : row) f.push_back(format_cell(c));
        line(f);
    }
    return out;
}

// Parses what to_csv writes (and any RFC 4180 text) into rows of fields.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\r' || c == '\n') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            row.push_back(std::move(field));
            field.clear();
            rows.push_back(std::move(row));
            row.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

// Writes through a sibling temporary file and renames it into place.
inline void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cli", "cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("cli", "short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cli", "cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Canonical form: keys sorted (nlohmann's default map), no whitespace.
inline std::string canonical(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::strict); }

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string config_hash(const json& effective) { return hash_hex(fnv1a64(canonical(effective))); }

struct ResultRecord {
    std::string experiment;
    std::string id;
    std::string config_hash;
    json config;
    Outcome outcome;
    double wall_clock_seconds = 0.0;  // kept out of results.json

    std::size_t count(Status s) const {
        std::size_t n = 0;
        for (const auto& v : outcome.verdicts) n += v.status == s;
        return n;
    }

    // 0 when everything passed, 1 on any failure, 2 when only inconclusive verdicts remain.
    int exit_code() const {
        if (count(Status::fail)) return 1;
        if (count(Status::inconclusive)) return 2;
        return 0;
    }

    json to_json() const {
        json j;
        j["experiment"] = experiment;
        j["id"] = id;
        j["config_hash"] = config_hash;
        j["config"] = config;
        j["scalars"] = outcome.scalars;
        json tables = json::object();
        for (const auto& t : outcome.tables) tables[t.name] = {{"file", t.name + ".csv"}, {"columns", t.columns}, {"rows", t.rows.size()}};
        j["tables"] = tables;
        json artifacts = json::array();
        for (const auto& f : outcome.files) artifacts.push_back({{"file", f.first}, {"bytes", f.second.size()}, {"fnv1a64", hash_hex(fnv1a64(f.second))}});
        j["artifacts"] = artifacts;
        json verdicts = json::array();
        for (const auto& v : outcome.verdicts) verdicts.push_back({{"criterion", v.criterion}, {"status", status_name(v.status)}, {"detail", v.detail}});
        j["verdicts"] = verdicts;
        j["summary"] = {{"pass", count(Status::pass)}, {"fail", count(Status::fail)}, {"inconclusive", count(Status::inconclusive)}};
        return j;
    }

    // The bytes of results.json: canonical JSON plus a final newline.
    std::string results_bytes() const { return to_json().dump(2, ' ', false, json::error_handler_t::replace) + "\n"; }
};

inline void write_record(const ResultRecord& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& t : r.outcome.tables) write_atomic(dir / (t.name + ".csv"), to_csv(t));
    for (const auto& [name, bytes] : r.outcome.files) write_atomic(dir / name, bytes);
    write_atomic(dir / "timing.json", json{{"id", r.id}, {"wall_clock_seconds", r.wall_clock_seconds}}.dump(2) + "\n");
    // results.json last, so its presence marks a complete run.
    write_atomic(dir / "results.json", r.results_bytes());
}

}  // namespace pamlab::cli
