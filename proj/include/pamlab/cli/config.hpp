#pragma once

#include <array>
#include <cstdint>
#include <numbers>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pamlab/cli/record.hpp"
#include "pamlab/errors.hpp"
#include "pamlab/manifold.hpp"

namespace pamlab::cli {

// Invalid configuration; `where` is "line L, column C" for syntax errors and
// a JSON pointer such as "/solver/dt" for field errors.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string where, const std::string& what)
        : std::runtime_error(where.empty() ? what : where + ": " + what), where_(std::move(where)) {}
    const std::string& where() const noexcept { return where_; }

private:
    std::string where_;
};

enum class Kind { verify_geometry, verify_kernels, verify_noise, verify_integrals, moments, simulate, intermittency, compare, holder, report };

inline constexpr std::array<std::pair<Kind, const char*>, 10> kKindNames{{
    {Kind::verify_geometry, "verify-geometry"},
    {Kind::verify_kernels, "verify-kernels"},
    {Kind::verify_noise, "verify-noise"},
    {Kind::verify_integrals, "verify-integrals"},
    {Kind::moments, "moments"},
    {Kind::simulate, "simulate"},
    {Kind::intermittency, "intermittency"},
    {Kind::compare, "compare"},
    {Kind::holder, "holder"},
    {Kind::report, "report"},
}};

inline std::string kind_name(Kind k) {
    for (const auto& [kind, name] : kKindNames)
        if (kind == k) return name;
    return "?";
}

inline bool is_stochastic(Kind k) { return k != Kind::verify_noise && k != Kind::report; }

// Field access that remembers what it read, so leftovers can be reported as unknown.
class Reader {
public:
    Reader(const json& j, std::string pointer) : j_(&j), ptr_(std::move(pointer)) {
        if (!j.is_object()) throw ConfigError(ptr_.empty() ? "/" : ptr_, "expected an object");
    }

    std::string path(const std::string& key) const { return ptr_ + "/" + key; }
    bool has(const std::string& key) const { return j_->contains(key); }

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const { throw ConfigError(path(key), msg); }

    const json& at(const std::string& key) {
        seen_.insert(key);
        if (!j_->contains(key)) fail(key, "required field is missing");
        return (*j_)[key];
    }

    double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
        if (!has(key) && fallback) return (seen_.insert(key), *fallback);
        const json& v = at(key);
        if (!v.is_number()) fail(key, "expected a number");
        return v.get<double>();
    }

    std::int64_t integer(const std::string& key, std::optional<std::int64_t> fallback = std::nullopt) {
        if (!has(key) && fallback) return (seen_.insert(key), *fallback);
        const json& v = at(key);
        if (!v.is_number_integer()) fail(key, "expected an integer");
        return v.get<std::int64_t>();
    }

    bool boolean(const std::string& key, bool fallback) {
        seen_.insert(key);
        if (!has(key)) return fallback;
        if (!(*j_)[key].is_boolean()) fail(key, "expected true or false");
        return (*j_)[key].get<bool>();
    }

    std::string string(const std::string& key, std::optional<std::string> fallback = std::nullopt) {
        if (!has(key) && fallback) return (seen_.insert(key), *fallback);
        const json& v = at(key);
        if (!v.is_string()) fail(key, "expected a string");
        return v.get<std::string>();
    }

    std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> fallback = std::nullopt) {
        if (!has(key) && fallback) return (seen_.insert(key), *fallback);
        const json& v = at(key);
        if (!v.is_array()) fail(key, "expected an array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) throw ConfigError(path(key) + "/" + std::to_string(i), "expected a number");
            out.push_back(v[i].get<double>());
        }
        return out;
    }

    std::vector<std::string> strings(const std::string& key, std::optional<std::vector<std::string>> fallback = std::nullopt) {
        if (!has(key) && fallback) return (seen_.insert(key), *fallback);
        const json& v = at(key);
        if (!v.is_array()) fail(key, "expected an array of strings");
        std::vector<std::string> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_string()) throw ConfigError(path(key) + "/" + std::to_string(i), "expected a string");
            out.push_back(v[i].get<std::string>());
        }
        return out;
    }

    // Array of coordinate pairs; a bare number is the first coordinate.
    std::vector<std::array<double, 2>> points(const std::string& key, std::optional<std::vector<std::array<double, 2>>> fallback = std::nullopt) {
        if (!has(key) && fallback) return (seen_.insert(key), *fallback);
        const json& v = at(key);
        if (!v.is_array()) fail(key, "expected an array of points");
        std::vector<std::array<double, 2>> out;
        for (std::size_t i = 0; i < v.size(); ++i) out.push_back(coordinates(v[i], path(key) + "/" + std::to_string(i)));
        return out;
    }

    std::array<double, 2> point(const std::string& key, std::optional<std::array<double, 2>> fallback = std::nullopt) {
        if (!has(key) && fallback) return (seen_.insert(key), *fallback);
        return coordinates(at(key), path(key));
    }

    Reader block(const std::string& key) {
        const json& v = at(key);
        return Reader(v, path(key));
    }

    std::optional<Reader> optional_block(const std::string& key) {
        seen_.insert(key);
        if (!has(key)) return std::nullopt;
        return Reader((*j_)[key], path(key));
    }

    // Throws on any key that was never read.
    void done() const {
        for (auto it = j_->begin(); it != j_->end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(path(it.key()), "unknown field");
    }

private:
    static std::array<double, 2> coordinates(const json& v, const std::string& where) {
        if (v.is_number()) return {v.get<double>(), 0.0};
        if (!v.is_array() || v.empty() || v.size() > 2) throw ConfigError(where, "expected a point: a number or [c0, c1]");
        std::array<double, 2> p{0.0, 0.0};
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) throw ConfigError(where + "/" + std::to_string(i), "expected a number");
            p[i] = v[i].get<double>();
        }
        return p;
    }

    const json* j_;
    std::string ptr_;
    std::set<std::string> seen_;
};

inline json points_json(const std::vector<std::array<double, 2>>& ps) {
    json a = json::array();
    for (const auto& p : ps) a.push_back({p[0], p[1]});
    return a;
}

// ---- parameter blocks ------------------------------------------------------

struct NoiseBlock {
    double alpha = 1.0;
    std::optional<double> rho;  // empty: the nonnegativity threshold of the truncated kernel

    static NoiseBlock read(Reader r) {
        NoiseBlock b;
        b.alpha = r.number("alpha", 1.0);
        if (r.has("rho")) {
            const json& v = r.at("rho");
            if (v.is_string()) {
                if (v.get<std::string>() != "threshold") r.fail("rho", "expected a number or \"threshold\"");
            } else if (v.is_number()) {
                b.rho = v.get<double>();
                if (!(*b.rho >= 0.0)) r.fail("rho", "must be >= 0");
            } else {
                r.fail("rho", "expected a number or \"threshold\"");
            }
        } else {
            r.at("rho");
        }
        if (!(b.alpha > 0.0)) r.fail("alpha", "must be > 0");
        r.done();
        return b;
    }
    json to_json() const { return {{"alpha", alpha}, {"rho", rho ? json(*rho) : json("threshold")}}; }
};

struct SolverBlock {
    int band = 16;
    int mesh_resolution = 0;
    double beta = 0.25;
    double dt = 1e-3;
    double horizon = 0.5;
    double smoothing_time = 0.01;
    std::int64_t paths = 1000;
    std::vector<double> checkpoints;
    std::vector<std::array<double, 2>> probes;
    double tilt_power = 0.0;

    static SolverBlock read(Reader r) {
        SolverBlock b;
        b.band = static_cast<int>(r.integer("band", 16));
        b.mesh_resolution = static_cast<int>(r.integer("mesh_resolution", 0));
        b.beta = r.number("beta");
        b.dt = r.number("dt");
        b.horizon = r.number("horizon");
        b.smoothing_time = r.number("smoothing_time", b.dt);
        b.paths = r.integer("paths");
        b.checkpoints = r.numbers("checkpoints", std::vector<double>{});
        b.probes = r.points("probes", std::vector<std::array<double, 2>>{});
        b.tilt_power = r.number("tilt_power", 0.0);
        if (b.band < 1) r.fail("band", "must be >= 1");
        if (b.mesh_resolution < 0) r.fail("mesh_resolution", "must be >= 0");
        if (!(b.beta >= 0.0)) r.fail("beta", "must be >= 0");
        if (!(b.dt > 0.0)) r.fail("dt", "must be > 0");
        if (!(b.horizon > 0.0)) r.fail("horizon", "must be > 0");
        if (!(b.smoothing_time >= b.dt)) r.fail("smoothing_time", "must be >= dt");
        if (b.paths < 1) r.fail("paths", "must be >= 1");
        if (!(b.tilt_power >= 0.0)) r.fail("tilt_power", "must be >= 0");
        r.done();
        return b;
    }
    json to_json() const {
        return {{"band", band},
                {"mesh_resolution", mesh_resolution},
                {"beta", beta},
                {"dt", dt},
                {"horizon", horizon},
                {"smoothing_time", smoothing_time},
                {"paths", paths},
                {"checkpoints", checkpoints},
                {"probes", points_json(probes)},
                {"tilt_power", tilt_power}};
    }
};

struct MeasureBlock {
    std::string kind = "dirac";  // "dirac" or "volume"
    std::vector<std::array<double, 2>> points;
    std::vector<double> masses;
    double scale = 1.0;  // volume measure only

    static MeasureBlock read(Reader r) {
        MeasureBlock b;
        b.kind = r.string("kind");
        if (b.kind == "dirac") {
            b.points = r.points("points");
            if (b.points.empty()) r.fail("points", "need at least one atom");
            b.masses = r.numbers("masses", std::vector<double>(b.points.size(), 1.0));
            if (b.masses.size() != b.points.size()) r.fail("masses", "need one mass per point");
            for (double m : b.masses)
                if (!(m > 0.0)) r.fail("masses", "masses must be > 0");
        } else if (b.kind == "volume") {
            b.scale = r.number("scale", 1.0);
            if (!(b.scale > 0.0)) r.fail("scale", "must be > 0");
        } else {
            r.fail("kind", "expected \"dirac\" or \"volume\"");
        }
        r.done();
        return b;
    }
    json to_json() const {
        if (kind == "volume") return {{"kind", kind}, {"scale", scale}};
        return {{"kind", kind}, {"points", points_json(points)}, {"masses", masses}};
    }
};

struct GeometryBlock {
    std::int64_t samples = 100000;
    std::int64_t antipodal_samples = 100000;
    std::int64_t zeta_samples = 50000;
    double torus_scale = 0.25;
    double sphere_scale = std::numbers::pi / 8;

    static GeometryBlock read(Reader r) {
        GeometryBlock b;
        b.samples = r.integer("samples", b.samples);
        b.antipodal_samples = r.integer("antipodal_samples", b.antipodal_samples);
        b.zeta_samples = r.integer("zeta_samples", b.zeta_samples);
        b.torus_scale = r.number("torus_scale", b.torus_scale);
        b.sphere_scale = r.number("sphere_scale", b.sphere_scale);
        if (b.samples < 1) r.fail("samples", "must be >= 1");
        if (b.antipodal_samples < 1) r.fail("antipodal_samples", "must be >= 1");
        if (b.zeta_samples < 1) r.fail("zeta_samples", "must be >= 1");
        if (!(b.torus_scale > 0.0) || b.torus_scale > ManifoldModel::flat_torus().unique_geodesic_scale())
            r.fail("torus_scale", "must lie in (0, unique geodesic scale]");
        if (!(b.sphere_scale > 0.0) || b.sphere_scale > ManifoldModel::sphere().unique_geodesic_scale())
            r.fail("sphere_scale", "must lie in (0, unique geodesic scale]");
        r.done();
        return b;
    }
    json to_json() const {
        return {{"samples", samples}, {"antipodal_samples", antipodal_samples}, {"zeta_samples", zeta_samples},
                {"torus_scale", torus_scale}, {"sphere_scale", sphere_scale}};
    }
};

struct KernelsBlock {
    std::int64_t oracle_pairs = 64;
    double epsilon = 0.5;

    static KernelsBlock read(Reader r) {
        KernelsBlock b;
        b.oracle_pairs = r.integer("oracle_pairs", b.oracle_pairs);
        b.epsilon = r.number("epsilon", b.epsilon);
        if (b.oracle_pairs < 1) r.fail("oracle_pairs", "must be >= 1");
        if (!(b.epsilon > 0.0)) r.fail("epsilon", "must be > 0");
        r.done();
        return b;
    }
    json to_json() const { return {{"oracle_pairs", oracle_pairs}, {"epsilon", epsilon}}; }
};

struct NoiseChecksBlock {
    std::int64_t modes = 10000;
    std::int64_t threshold_resolution = 4000;

    static NoiseChecksBlock read(Reader r) {
        NoiseChecksBlock b;
        b.modes = r.integer("modes", b.modes);
        b.threshold_resolution = r.integer("threshold_resolution", b.threshold_resolution);
        if (b.modes < 1) r.fail("modes", "must be >= 1");
        if (b.threshold_resolution < 8) r.fail("threshold_resolution", "must be >= 8");
        r.done();
        return b;
    }
    json to_json() const { return {{"modes", modes}, {"threshold_resolution", threshold_resolution}}; }
};

struct IntegralsBlock {
    std::string model = "circle";
    double alpha = 0.25;
    std::int64_t resolution = 512;
    std::int64_t base_points = 8;
    std::vector<std::string> estimates;  // empty: all
    bool k_envelope = true;
    bool structural_bound = true;

    static IntegralsBlock read(Reader r) {
        IntegralsBlock b;
        b.model = r.string("model", b.model);
        b.alpha = r.number("alpha", b.alpha);
        b.resolution = r.integer("resolution", b.resolution);
        b.base_points = r.integer("base_points", b.base_points);
        b.estimates = r.strings("estimates", std::vector<std::string>{});
        b.k_envelope = r.boolean("k_envelope", b.k_envelope);
        b.structural_bound = r.boolean("structural_bound", b.structural_bound);
        if (b.resolution < 16) r.fail("resolution", "must be >= 16");
        if (b.base_points < 1) r.fail("base_points", "must be >= 1");
        r.done();
        return b;
    }
    json to_json() const {
        return {{"model", model}, {"alpha", alpha}, {"resolution", resolution}, {"base_points", base_points},
                {"estimates", estimates}, {"k_envelope", k_envelope}, {"structural_bound", structural_bound}};
    }
};

struct MomentsBlock {
    std::array<double, 2> x{0.0, 0.0};
    std::int64_t orders = 3;
    std::int64_t intervals = 256;

    static MomentsBlock read(Reader r) {
        MomentsBlock b;
        b.x = r.point("x", b.x);
        b.orders = r.integer("orders", b.orders);
        b.intervals = r.integer("intervals", b.intervals);
        if (b.orders < 0) r.fail("orders", "must be >= 0");
        if (b.intervals < 2 || b.intervals % 2) r.fail("intervals", "must be even and >= 2");
        r.done();
        return b;
    }
    json to_json() const { return {{"x", {x[0], x[1]}}, {"orders", orders}, {"intervals", intervals}}; }
};

struct SimulateBlock {
    double envelope_slack = 0.10;
    double mean_z_limit = 4.0;
    std::optional<double> positivity_t;
    std::vector<double> positivity_epsilons;
    std::vector<std::string> weak_functionals;
    std::vector<double> weak_times;
    bool trajectories = false;

    static SimulateBlock read(Reader r) {
        SimulateBlock b;
        b.envelope_slack = r.number("envelope_slack", b.envelope_slack);
        b.mean_z_limit = r.number("mean_z_limit", b.mean_z_limit);
        if (auto p = r.optional_block("positivity")) {
            b.positivity_t = p->number("t");
            b.positivity_epsilons = p->numbers("epsilons");
            if (b.positivity_epsilons.empty()) p->fail("epsilons", "need at least one level");
            p->done();
        }
        if (auto w = r.optional_block("weak")) {
            b.weak_functionals = w->strings("functionals");
            b.weak_times = w->numbers("times");
            if (b.weak_functionals.empty()) w->fail("functionals", "need at least one test function");
            if (b.weak_times.size() < 2) w->fail("times", "need at least two times");
            w->done();
        }
        b.trajectories = r.boolean("trajectories", false);
        if (!(b.envelope_slack >= 0.0)) r.fail("envelope_slack", "must be >= 0");
        if (!(b.mean_z_limit > 0.0)) r.fail("mean_z_limit", "must be > 0");
        r.done();
        return b;
    }
    json to_json() const {
        json j{{"envelope_slack", envelope_slack}, {"mean_z_limit", mean_z_limit}, {"trajectories", trajectories}};
        if (positivity_t) j["positivity"] = {{"t", *positivity_t}, {"epsilons", positivity_epsilons}};
        if (!weak_functionals.empty()) j["weak"] = {{"functionals", weak_functionals}, {"times", weak_times}};
        return j;
    }
};

struct IntermittencyBlock {
    std::vector<double> betas{0.5, 1.0};
    std::array<double, 2> window{2.0, 6.0};

    static IntermittencyBlock read(Reader r) {
        IntermittencyBlock b;
        b.betas = r.numbers("betas", b.betas);
        const auto w = r.numbers("window", std::vector<double>{b.window[0], b.window[1]});
        if (b.betas.empty()) r.fail("betas", "need at least one beta");
        for (double beta : b.betas)
            if (!(beta >= 0.0)) r.fail("betas", "betas must be >= 0");
        if (w.size() != 2 || !(w[0] >= 0.0 && w[1] > w[0])) r.fail("window", "expected [t_lo, t_hi] with 0 <= t_lo < t_hi");
        b.window = {w[0], w[1]};
        r.done();
        return b;
    }
    json to_json() const { return {{"betas", betas}, {"window", {window[0], window[1]}}}; }
};

struct CompareBlock {
    MeasureBlock low, high;
    std::vector<double> dts{1e-3, 5e-4};
    double tolerance = 1e-3;
    double max_fraction = 1e-3;

    static CompareBlock read(Reader r) {
        CompareBlock b;
        b.low = MeasureBlock::read(r.block("low"));
        b.high = MeasureBlock::read(r.block("high"));
        b.dts = r.numbers("dts", b.dts);
        b.tolerance = r.number("tolerance", b.tolerance);
        b.max_fraction = r.number("max_fraction", b.max_fraction);
        if (b.dts.empty()) r.fail("dts", "need at least one step size");
        for (double d : b.dts)
            if (!(d > 0.0)) r.fail("dts", "step sizes must be > 0");
        if (!(b.tolerance >= 0.0)) r.fail("tolerance", "must be >= 0");
        r.done();
        return b;
    }
    json to_json() const {
        return {{"low", low.to_json()}, {"high", high.to_json()}, {"dts", dts}, {"tolerance", tolerance}, {"max_fraction", max_fraction}};
    }
};

struct HolderBlock {
    std::int64_t p = 2;
    std::array<double, 2> window{0.2, 0.5};
    std::array<double, 2> distance{0.05, 0.4};
    std::array<double, 2> lag{0.01, 0.3};
    std::int64_t bins = 8;
    double relative_band = 0.15;  // pass when |exponent/target - 1| ≤ this

    static HolderBlock read(Reader r) {
        HolderBlock b;
        b.p = r.integer("p", b.p);
        auto pair = [&](const char* key, std::array<double, 2> def) {
            const auto v = r.numbers(key, std::vector<double>{def[0], def[1]});
            if (v.size() != 2 || !(v[0] >= 0.0 && v[1] > v[0])) r.fail(key, "expected an increasing pair [lo, hi]");
            return std::array<double, 2>{v[0], v[1]};
        };
        b.window = pair("window", b.window);
        b.distance = pair("distance", b.distance);
        b.lag = pair("lag", b.lag);
        b.bins = r.integer("bins", b.bins);
        b.relative_band = r.number("relative_band", b.relative_band);
        if (b.p != 2 && b.p != 4) r.fail("p", "must be 2 or 4");
        if (b.bins < 3) r.fail("bins", "must be >= 3");
        if (!(b.relative_band > 0.0)) r.fail("relative_band", "must be > 0");
        r.done();
        return b;
    }
    json to_json() const {
        return {{"p", p}, {"window", {window[0], window[1]}}, {"distance", {distance[0], distance[1]}},
                {"lag", {lag[0], lag[1]}}, {"bins", bins}, {"relative_band", relative_band}};
    }
};

// ---- the experiment --------------------------------------------------------

struct ExperimentConfig {
    Kind kind = Kind::verify_geometry;
    std::string id;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;     // not part of the hash
    std::optional<std::string> output;  // not part of the hash
    std::vector<std::string> models;  // one entry for model-specific kinds

    std::optional<GeometryBlock> geometry;
    std::optional<KernelsBlock> kernels;
    std::optional<NoiseChecksBlock> noise_checks;
    std::optional<IntegralsBlock> integrals;
    std::optional<NoiseBlock> noise;
    std::optional<SolverBlock> solver;
    std::optional<MeasureBlock> measure;
    std::optional<MomentsBlock> moments;
    std::optional<SimulateBlock> simulate;
    std::optional<IntermittencyBlock> intermittency;
    std::optional<CompareBlock> compare;
    std::optional<HolderBlock> holder;
    std::string results_dir;  // report

    ManifoldModel model() const { return ManifoldModel::from_name(models.at(0)); }

    // Everything that determines the outcome, with defaults filled in.
    json effective() const {
        json j{{"experiment", kind_name(kind)}, {"id", id}};
        if (seed) j["seed"] = *seed;
        if (kind == Kind::verify_geometry || kind == Kind::verify_kernels || kind == Kind::verify_noise)
            j["models"] = models;
        else if (!models.empty())
            j["model"] = models[0];
        if (geometry) j["geometry"] = geometry->to_json();
        if (kernels) j["kernels"] = kernels->to_json();
        if (noise_checks) j["checks"] = noise_checks->to_json();
        if (integrals) j["integrals"] = integrals->to_json();
        if (noise) j["noise"] = noise->to_json();
        if (solver) j["solver"] = solver->to_json();
        if (measure) j["measure"] = measure->to_json();
        if (moments) j["moments"] = moments->to_json();
        if (simulate) j["simulate"] = simulate->to_json();
        if (intermittency) j["intermittency"] = intermittency->to_json();
        if (compare) j["compare"] = compare->to_json();
        if (holder) j["holder"] = holder->to_json();
        if (kind == Kind::report) j["results_dir"] = results_dir;
        return j;
    }

    std::string hash() const { return config_hash(effective()); }
};

// Byte offset to "line L, column C" (both 1-based).
inline std::string line_column(const std::string& text, std::size_t offset) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < std::min(offset, text.size()); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

inline json parse_json_text(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        // nlohmann reports the byte just past the offending token.
        const std::size_t at = e.byte > 0 ? e.byte - 1 : 0;
        std::string msg = e.what();
        if (const auto pos = msg.find("syntax error"); pos != std::string::npos) msg = msg.substr(pos);
        throw ConfigError(line_column(text, at), msg);
    }
}

inline std::string read_model_name(Reader& r, const std::string& key, std::optional<std::string> fallback = std::nullopt) {
    const std::string name = r.string(key, fallback);
    try {
        (void)ManifoldModel::from_name(name);
    } catch (const Error&) {
        r.fail(key, "unknown model '" + name + "' (expected circle, torus2 or sphere2)");
    }
    return name;
}

inline ExperimentConfig parse_config(const json& root) {
    Reader r(root, "");
    ExperimentConfig c;
    const std::string kind = r.string("experiment");
    bool known = false;
    for (const auto& [k, name] : kKindNames)
        if (kind == name) {
            c.kind = k;
            known = true;
        }
    if (!known) r.fail("experiment", "unknown experiment kind '" + kind + "'");
    c.id = r.string("id", kind);
    if (c.id.empty() || c.id.find_first_of("/\\") != std::string::npos) r.fail("id", "must be a nonempty name without path separators");
    if (r.has("seed")) {
        const json& s = r.at("seed");
        if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0)) r.fail("seed", "expected a nonnegative integer");
        c.seed = s.get<std::uint64_t>();
    }
    if (r.has("threads")) {
        const auto t = r.integer("threads");
        if (t < 1) r.fail("threads", "must be >= 1");
        c.threads = static_cast<int>(t);
    }
    if (r.has("output")) c.output = r.string("output");

    auto models_list = [&] {
        if (r.has("model")) {
            c.models = {read_model_name(r, "model")};
        } else {
            c.models = r.strings("models", std::vector<std::string>{"circle", "torus2", "sphere2"});
            if (c.models.empty()) r.fail("models", "need at least one model");
            for (std::size_t i = 0; i < c.models.size(); ++i) {
                try {
                    (void)ManifoldModel::from_name(c.models[i]);
                } catch (const Error&) {
                    throw ConfigError(r.path("models") + "/" + std::to_string(i), "unknown model '" + c.models[i] + "'");
                }
            }
        }
    };
    auto block_or_default = [&](const char* key, auto read) {
        if (auto b = r.optional_block(key)) return read(*b);
        return read(Reader(json::object(), r.path(key)));
    };

    switch (c.kind) {
        case Kind::verify_geometry:
            models_list();
            c.geometry = block_or_default("geometry", GeometryBlock::read);
            break;
        case Kind::verify_kernels:
            models_list();
            c.kernels = block_or_default("kernels", KernelsBlock::read);
            break;
        case Kind::verify_noise:
            models_list();
            c.noise_checks = block_or_default("checks", NoiseChecksBlock::read);
            break;
        case Kind::verify_integrals:
            c.integrals = block_or_default("integrals", IntegralsBlock::read);
            break;
        case Kind::moments:
        case Kind::simulate:
        case Kind::intermittency:
        case Kind::compare:
        case Kind::holder:
            c.models = {read_model_name(r, "model")};
            c.noise = NoiseBlock::read(r.block("noise"));
            c.solver = SolverBlock::read(r.block("solver"));
            if (c.kind == Kind::moments) {
                c.measure = MeasureBlock::read(r.block("measure"));
                if (c.measure->kind != "dirac" || c.measure->points.size() != 1 || c.measure->masses[0] != 1.0)
                    throw ConfigError(r.path("measure"), "the series cross-check takes a single unit Dirac mass");
                c.moments = block_or_default("moments", MomentsBlock::read);
            } else if (c.kind == Kind::simulate) {
                c.measure = MeasureBlock::read(r.block("measure"));
                c.simulate = block_or_default("simulate", SimulateBlock::read);
            } else if (c.kind == Kind::intermittency) {
                c.measure = block_or_default("measure", [](Reader b) {
                    if (!b.has("kind")) {
                        b.done();
                        return MeasureBlock{"volume", {}, {}, 1.0};
                    }
                    return MeasureBlock::read(b);
                });
                c.intermittency = block_or_default("intermittency", IntermittencyBlock::read);
            } else if (c.kind == Kind::compare) {
                c.compare = CompareBlock::read(r.block("compare"));
            } else {
                c.measure = MeasureBlock::read(r.block("measure"));
                c.holder = block_or_default("holder", HolderBlock::read);
            }
            break;
        case Kind::report:
            c.results_dir = r.string("results_dir");
            break;
    }
    if (is_stochastic(c.kind) && !c.seed) r.fail("seed", "required for stochastic experiments (or pass --seed)");
    r.done();
    return c;
}

// Parses text; `seed_override` stands in for a missing or different "seed".
inline ExperimentConfig load_config(const std::string& text, std::optional<std::uint64_t> seed_override = std::nullopt) {
    json root = parse_json_text(text);
    if (!root.is_object()) throw ConfigError("/", "top level must be an object");
    if (seed_override) root["seed"] = *seed_override;
    return parse_config(root);
}

}  // namespace pamlab::cli
