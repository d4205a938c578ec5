#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "pamlab/cli/runner.hpp"

using namespace pamlab;
using namespace pamlab::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("pamlab_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream(p, std::ios::binary) << s;
}

struct Invocation {
    int code = -1;
    std::string out, err;
};

// Runs the real binary with stdout/stderr captured to files.
Invocation invoke(const std::string& args, const fs::path& dir) {
    const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = std::string(PAM_LAB_BINARY) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int raw = std::system(cmd.c_str());
    Invocation r;
    r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = read_file(out);
    r.err = read_file(err);
    return r;
}

const char* kSmallSimulate = R"({
  "experiment": "simulate", "id": "small", "seed": 4, "model": "circle",
  "noise": {"alpha": 1.0, "rho": "threshold"},
  "solver": {"band": 8, "beta": 0.25, "dt": 0.004, "horizon": 0.2, "smoothing_time": 0.02, "paths": 64,
             "checkpoints": [0.04, 0.08, 0.12, 0.16, 0.2], "probes": [0.0, 1.0]},
  "measure": {"kind": "dirac", "points": [0.0]},
  "simulate": {"trajectories": true}
})";

ConfigError config_error(const std::string& text) {
    try {
        load_config(text);
    } catch (const ConfigError& e) {
        return e;
    }
    ADD_FAILURE() << "no ConfigError for " << text;
    return ConfigError("", "");
}

}  // namespace

TEST(Config, SyntaxErrorsCarryLineAndColumn) {
    const auto e = config_error("{\n  \"experiment\": \"verify-noise\",\n  \"id\": ,\n}");
    EXPECT_EQ(e.where(), "line 3, column 9");
    EXPECT_NE(std::string(e.what()).find("syntax error"), std::string::npos);
}

TEST(Config, FieldErrorsCarryJsonPointers) {
    EXPECT_EQ(config_error(R"({"experiment": "verify-noise", "checks": {"modes": "many"}})").where(), "/checks/modes");
    EXPECT_EQ(config_error(R"({"experiment": "verify-noise", "checks": {"mods": 3}})").where(), "/checks/mods");
    EXPECT_EQ(config_error(R"({"experiment": "nope"})").where(), "/experiment");
    EXPECT_EQ(config_error(R"({"experiment": "verify-geometry", "models": ["circle", "klein"], "seed": 1})").where(), "/models/1");
    // Seed is mandatory for sampling experiments.
    EXPECT_EQ(config_error(R"({"experiment": "verify-geometry"})").where(), "/seed");
    EXPECT_NO_THROW(load_config(R"({"experiment": "verify-geometry"})", 5));
}

TEST(Config, SemanticChecksPointAtTheOffendingBlock) {
    auto semantic = [](const std::string& text) -> std::string {
        try {
            validate_semantics(load_config(text));
        } catch (const ConfigError& e) {
            return e.where();
        }
        return "";
    };
    const std::string head = R"("seed": 1, "noise": {"alpha": 0.5, "rho": 1}, "solver": {"beta": 0.1, "dt": 0.01, "horizon": 0.1, "paths": 2})";
    EXPECT_EQ(semantic(R"({"experiment": "simulate", "seed": 1, "model": "circle", "noise": {"alpha": 1, "rho": 1},
        "solver": {"band": 8, "mesh_resolution": 10, "beta": 0.1, "dt": 0.01, "horizon": 0.1, "paths": 2}, "measure": {"kind": "volume"}})"),
              "/solver/mesh_resolution");
    EXPECT_EQ(semantic(R"({"experiment": "simulate", "model": "circle", )" + head + R"(, "measure": {"kind": "volume"},
        "simulate": {"positivity": {"t": 0.015, "epsilons": [0]}}})"),
              "/simulate/positivity/t");
    EXPECT_EQ(semantic(R"({"experiment": "compare", "model": "circle", )" + head +
                       R"(, "compare": {"low": {"kind": "dirac", "points": [0, 1]}, "high": {"kind": "dirac", "points": [0]}}})"),
              "/compare/high");
    EXPECT_EQ(semantic(R"({"experiment": "simulate", "model": "circle", )" + head +
                       R"(, "measure": {"kind": "volume"}, "simulate": {"weak": {"functionals": ["mode:x"], "times": [0.01, 0.02]}}})"),
              "/simulate/weak/functionals/0");
    EXPECT_EQ(semantic(R"({"experiment": "simulate", "model": "circle", )" + head + R"(, "measure": {"kind": "volume"}})"), "");
}

TEST(Config, HashIgnoresKeyOrderWhitespaceThreadsAndOutput) {
    const auto a = load_config(R"({"experiment":"verify-noise","id":"n","checks":{"modes":100,"threshold_resolution":64}})");
    const auto b = load_config("{ \"checks\" : { \"threshold_resolution\" : 64 , \"modes\" : 100 },\n \"threads\": 7, \"output\": \"x\", \"id\": \"n\", \"experiment\": \"verify-noise\" }");
    EXPECT_EQ(a.hash(), b.hash());
    EXPECT_EQ(a.hash().size(), 16u);
    // Defaults are part of the effective config, so spelling them out changes nothing.
    const auto c = load_config(R"({"experiment":"verify-noise","id":"n","models":["circle","torus2","sphere2"],"checks":{"modes":100,"threshold_resolution":64}})");
    EXPECT_EQ(a.hash(), c.hash());
    const auto d = load_config(R"({"experiment":"verify-noise","id":"n","checks":{"modes":101,"threshold_resolution":64}})");
    EXPECT_NE(a.hash(), d.hash());
}

TEST(Record, CsvQuotingRoundTrips) {
    std::mt19937_64 gen(3);
    const std::string alphabet = "ab,\"\r\n x.";
    for (int trial = 0; trial < 200; ++trial) {
        Table t{"t", {"a", "b,c", "d\"e"}, {}};
        std::vector<std::vector<std::string>> want{t.columns};
        for (int r = 0; r < 4; ++r) {
            std::vector<Cell> row;
            std::vector<std::string> text;
            for (int c = 0; c < 3; ++c) {
                std::string s;
                const int n = static_cast<int>(gen() % 6);
                for (int i = 0; i < n; ++i) s += alphabet[gen() % alphabet.size()];
                row.push_back(s);
                text.push_back(s);
            }
            t.rows.push_back(row);
            want.push_back(text);
        }
        const std::string csv = to_csv(t);
        EXPECT_EQ(parse_csv(csv), want) << csv;
        EXPECT_EQ(csv.substr(csv.size() - 2), "\r\n");
    }
}

TEST(Record, NumbersUseShortestRoundTripWithDecimalPoint) {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(-30, 30);
    for (int i = 0; i < 1000; ++i) {
        const double v = std::ldexp(u(gen), static_cast<int>(gen() % 200) - 100);
        const std::string s = format_number(v);
        EXPECT_EQ(s.find(','), std::string::npos);
        EXPECT_EQ(std::strtod(s.c_str(), nullptr), v) << s;
    }
    EXPECT_EQ(format_number(0.25), "0.25");
    EXPECT_EQ(format_cell(Cell{std::int64_t{-3}}), "-3");
}

TEST(Record, ExitCodeFollowsWorstVerdict) {
    ResultRecord r;
    EXPECT_EQ(r.exit_code(), 0);
    r.outcome.verdict("reproducibility", true, "");
    EXPECT_EQ(r.exit_code(), 0);
    r.outcome.inconclusive("positivity", "");
    EXPECT_EQ(r.exit_code(), 2);
    r.outcome.verdict("positivity", false, "");
    EXPECT_EQ(r.exit_code(), 1);
}

TEST(Record, ResultsJsonIsCanonicalAndWritesAreAtomic) {
    const auto dir = scratch("record");
    ResultRecord r;
    r.experiment = "verify-noise";
    r.id = "x";
    r.config = json::parse(R"({"z": 1, "a": {"y": 2, "b": 3}})");
    r.config_hash = config_hash(r.config);
    r.outcome.scalars["k"] = 1.5;
    r.outcome.tables.push_back({"tab", {"c"}, {{Cell{1.0}}}});
    r.wall_clock_seconds = 123.0;
    write_record(r, dir);
    const std::string bytes = read_file(dir / "results.json");
    EXPECT_EQ(bytes, r.results_bytes());
    EXPECT_EQ(bytes.find("wall_clock"), std::string::npos);
    EXPECT_LT(bytes.find("\"a\""), bytes.find("\"z\""));
    EXPECT_EQ(json::parse(bytes).dump(2) + "\n", bytes);  // already in sorted-key form
    EXPECT_TRUE(fs::exists(dir / "timing.json"));
    EXPECT_TRUE(fs::exists(dir / "tab.csv"));
    for (const auto& e : fs::directory_iterator(dir)) EXPECT_NE(e.path().extension(), ".tmp");
}

TEST(Run, MalformedJsonExits64WithDiagnostic) {
    const auto dir = scratch("malformed");
    write_text(dir / "bad.json", "{\"experiment\": \"verify-noise\",, }");
    const auto r = invoke("run " + (dir / "bad.json").string() + " --out " + (dir / "out").string(), dir);
    EXPECT_EQ(r.code, 64);
    EXPECT_NE(r.err.find("line 1, column"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(dir / "out" / "results.json"));
    EXPECT_EQ(invoke("run " + (dir / "missing.json").string(), dir).code, 64);
}

TEST(Run, RuntimeErrorsExit70WithModuleTag) {
    const auto dir = scratch("runtime");
    // rho below the truncated kernel's nonnegativity threshold: the growth-rate driver refuses.
    write_text(dir / "c.json", R"({"experiment": "intermittency", "seed": 1, "model": "circle", "noise": {"alpha": 1, "rho": 0.01},
        "solver": {"band": 4, "beta": 0.5, "dt": 0.01, "horizon": 1, "paths": 4}, "intermittency": {"betas": [0.5], "window": [0.5, 1]}})");
    const auto r = invoke("run " + (dir / "c.json").string() + " --out " + (dir / "out").string(), dir);
    EXPECT_EQ(r.code, 70);
    EXPECT_NE(r.err.find("[solver]"), std::string::npos) << r.err;
}

TEST(Run, VerifyGeometryShipsPassingWithZetaTable) {
    const auto dir = scratch("geometry");
    const auto r = invoke(std::string("run ") + PAM_LAB_CONFIG_DIR + "/verify-geometry.json --threads 2 --out " + (dir / "out").string(), dir);
    ASSERT_EQ(r.code, 0) << r.out << r.err;
    const auto rows = parse_csv(read_file(dir / "out" / "zeta.csv"));
    std::set<std::string> models;
    for (std::size_t i = 1; i < rows.size(); ++i) models.insert(rows[i][0]);
    EXPECT_EQ(models, (std::set<std::string>{"circle", "torus2", "sphere2"}));
    const auto j = json::parse(read_file(dir / "out" / "results.json"));
    EXPECT_EQ(j["summary"]["fail"], 0);
    for (const auto& v : j["verdicts"]) EXPECT_TRUE(is_registered(v["criterion"].get<std::string>()));
}

TEST(Run, ResultsAreByteIdenticalAcrossThreadCounts) {
    const auto c = load_config(kSmallSimulate);
    const auto one = execute(c, 1);
    for (int t : {4, 8}) {
        const auto other = execute(c, t);
        EXPECT_EQ(other.results_bytes(), one.results_bytes()) << t;
        ASSERT_EQ(other.outcome.files.size(), 1u);
        EXPECT_EQ(other.outcome.files[0].second, one.outcome.files[0].second);
    }
    // Through the binary too, with the thread count from the environment.
    const auto dir = scratch("determinism");
    write_text(dir / "c.json", kSmallSimulate);
    ASSERT_EQ(invoke("run " + (dir / "c.json").string() + " --threads 1 --out " + (dir / "a").string(), dir).code, 0);
    ASSERT_EQ(invoke("run " + (dir / "c.json").string() + " --out " + (dir / "b").string(), dir).code, 0);
    ::setenv("PAM_LAB_THREADS", "3", 1);
    const auto viaenv = invoke("run " + (dir / "c.json").string() + " --out " + (dir / "c").string(), dir);
    ::unsetenv("PAM_LAB_THREADS");
    ASSERT_EQ(viaenv.code, 0);
    EXPECT_EQ(read_file(dir / "a" / "results.json"), read_file(dir / "b" / "results.json"));
    EXPECT_EQ(read_file(dir / "a" / "results.json"), read_file(dir / "c" / "results.json"));
    EXPECT_EQ(read_file(dir / "a" / "results.json"), one.results_bytes());
}

TEST(Run, TrajectoryDumpCarriesTheConfigHash) {
    const auto c = load_config(kSmallSimulate);
    const auto r = execute(c, 2);
    const auto t = decode_trajectories(r.outcome.files.at(0).second);
    EXPECT_EQ(hash_hex(t.config_hash), r.config_hash);
    EXPECT_EQ(t.paths, 64u);
    EXPECT_EQ(t.checkpoints, 5u);
    EXPECT_EQ(t.mesh_size, static_cast<std::uint64_t>(dealiased_resolution(ManifoldModel::circle(), 8)));
}

TEST(Run, SeedOverrideChangesHashAndResults) {
    const auto a = execute(load_config(kSmallSimulate), 1);
    const auto b = execute(load_config(kSmallSimulate, 99), 1);
    EXPECT_NE(a.config_hash, b.config_hash);
    EXPECT_NE(a.outcome.scalars.dump(), b.outcome.scalars.dump());
}

TEST(Run, IntermittencyReportsTheGrowthTarget) {
    const auto c = load_config(R"({"experiment": "intermittency", "seed": 2, "model": "circle",
        "noise": {"alpha": 1, "rho": 6.283185307179586},
        "solver": {"band": 4, "beta": 0.5, "dt": 0.01, "horizon": 2, "smoothing_time": 0.01, "paths": 200, "tilt_power": 2},
        "intermittency": {"betas": [0.5], "window": [1, 2]}})");
    const auto r = execute(c, 1);
    ASSERT_EQ(r.outcome.tables.size(), 1u);
    const auto& row = r.outcome.tables[0].rows.at(0);
    EXPECT_NEAR(std::get<double>(row[1]), 0.25, 1e-15);  // β²ρ/m₀ with ρ = m₀
    EXPECT_TRUE(std::isfinite(std::get<double>(row[2])));
}

TEST(Report, EmptyDirectoryGivesEmptyMatrix) {
    const auto dir = scratch("report_empty");
    const auto r = invoke("report " + dir.string(), dir);
    EXPECT_EQ(r.code, 0);
    const auto rows = parse_csv(read_file(dir / "traceability.csv"));
    ASSERT_EQ(rows.size(), 1u);  // header only
    EXPECT_EQ(rows[0][0], "claim");
    EXPECT_NE(r.out.find("0 rows"), std::string::npos);
}

TEST(Report, PassingSuiteGivesAllPassRows) {
    const auto dir = scratch("report_pass");
    write_text(dir / "noise.json", R"({"experiment": "verify-noise", "id": "noise", "models": ["circle"]})");
    std::ostringstream out, err;
    RunOptions opt;
    opt.out = dir / "results" / "noise";
    opt.threads = 1;
    run_command(dir / "noise.json", opt, out, err);
    std::ostringstream rout, rerr;
    ASSERT_EQ(report_command(dir / "results", rout, rerr), 0);
    const auto rows = parse_csv(read_file(dir / "results" / "traceability.csv"));
    ASSERT_GT(rows.size(), 1u);
    const auto j = json::parse(read_file(dir / "results" / "noise" / "results.json"));
    std::size_t pass = j["summary"]["pass"];
    ASSERT_EQ(pass + 1, rows.size());
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_EQ(rows[i][5], "pass");
        EXPECT_FALSE(rows[i][0].empty());
        EXPECT_NE(rows[i][0], "(unregistered)");
    }
}

TEST(Report, MixedResultsCountsMatchRows) {
    const auto dir = scratch("report_mixed");
    auto record = [&](const std::string& id, std::vector<Status> statuses) {
        ResultRecord r;
        r.experiment = "simulate";
        r.id = id;
        r.config = {{"id", id}};
        r.config_hash = config_hash(r.config);
        for (auto s : statuses) r.outcome.verdicts.push_back({"positivity", s, "detail, with \"quotes\""});
        write_record(r, dir / id);
    };
    record("a", {Status::pass, Status::fail});
    record("b", {Status::inconclusive, Status::pass, Status::pass});
    fs::create_directories(dir / "junk");
    write_text(dir / "junk" / "results.json", "not json");  // skipped with a warning
    std::ostringstream out, err;
    ASSERT_EQ(report_command(dir, out, err), 0);
    EXPECT_NE(err.str().find("skipping"), std::string::npos);
    const auto rows = parse_csv(read_file(dir / "traceability.csv"));
    ASSERT_EQ(rows.size(), 6u);
    std::map<std::string, int> counts;
    for (std::size_t i = 1; i < rows.size(); ++i) ++counts[rows[i][5]];
    EXPECT_EQ(counts["pass"], 3);
    EXPECT_EQ(counts["fail"], 1);
    EXPECT_EQ(counts["inconclusive"], 1);
    EXPECT_EQ(rows[1][6], "detail, with \"quotes\"");
    EXPECT_NE(out.str().find("5 rows: 3 pass, 1 fail, 1 inconclusive"), std::string::npos) << out.str();
}

TEST(Report, ConfigKindDelegatesToReport) {
    const auto dir = scratch("report_kind");
    write_text(dir / "r.json", R"({"experiment": "report", "results_dir": ")" + (dir / "none").generic_string() + R"("})");
    EXPECT_EQ(invoke("run " + (dir / "r.json").string(), dir).code, 0);
}

TEST(Criteria, EveryNameIsUniqueAndHasAClaim) {
    std::set<std::string_view> names;
    for (const auto& c : kCriteria) {
        EXPECT_TRUE(names.insert(c.name).second) << c.name;
        EXPECT_FALSE(c.claim.empty());
    }
    EXPECT_FALSE(is_registered("criterion-7"));
}
