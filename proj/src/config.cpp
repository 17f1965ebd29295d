#include "blockqueue/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace blockqueue {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ValidationError(path + ": " + what);
}

double require_number(const json& j, const std::string& path) {
    if (!j.is_number()) fail(path, "expected a number");
    return j.get<double>();
}

Matrix parse_matrix(const json& j, const std::string& path) {
    if (!j.is_array() || j.empty()) fail(path, "expected a non-empty array of rows");
    const int rows = static_cast<int>(j.size());
    if (!j[0].is_array() || j[0].empty()) fail(path, "expected row-major arrays of numbers");
    const int cols = static_cast<int>(j[0].size());
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        if (!j[i].is_array() || static_cast<int>(j[i].size()) != cols)
            fail(path + "[" + std::to_string(i) + "]", "ragged matrix rows");
        for (int k = 0; k < cols; ++k)
            m(i, k) = require_number(j[i][k], path + "[" + std::to_string(i) + "][" + std::to_string(k) + "]");
    }
    return m;
}

Vec parse_vector(const json& j, const std::string& path) {
    if (!j.is_array() || j.empty()) fail(path, "expected a non-empty array of numbers");
    Vec v(j.size());
    for (size_t i = 0; i < j.size(); ++i)
        v[i] = require_number(j[i], path + "[" + std::to_string(i) + "]");
    return v;
}

void parse_options(const json& root, LoadedConfig& cfg) {
    if (root.contains("solver")) {
        const json& s = root["solver"];
        if (!s.is_object()) fail("solver", "expected an object");
        if (s.contains("tolerance")) cfg.solver.tolerance = require_number(s["tolerance"], "solver.tolerance");
        if (s.contains("maxIter")) cfg.solver.max_iter = static_cast<int>(require_number(s["maxIter"], "solver.maxIter"));
        if (s.contains("truncationK"))
            cfg.solver.truncation_k = static_cast<int>(require_number(s["truncationK"], "solver.truncationK"));
        if (s.contains("confirmCap"))
            cfg.solver.confirm_cap = static_cast<int>(require_number(s["confirmCap"], "solver.confirmCap"));
        if (cfg.solver.tolerance <= 0) fail("solver.tolerance", "must be positive");
        if (cfg.solver.max_iter < 1) fail("solver.maxIter", "must be >= 1");
    }
    if (root.contains("sim")) {
        const json& s = root["sim"];
        if (!s.is_object()) fail("sim", "expected an object");
        if (s.contains("horizon")) cfg.sim.horizon_events = static_cast<long>(require_number(s["horizon"], "sim.horizon"));
        if (s.contains("replications"))
            cfg.sim.replications = static_cast<int>(require_number(s["replications"], "sim.replications"));
        if (s.contains("seed")) cfg.sim.seed = static_cast<uint64_t>(require_number(s["seed"], "sim.seed"));
        if (s.contains("warmup")) cfg.sim.warmup = require_number(s["warmup"], "sim.warmup");
        if (cfg.sim.horizon_events <= 0) fail("sim.horizon", "must be positive");
        if (cfg.sim.replications < 1) fail("sim.replications", "must be >= 1");
        if (cfg.sim.warmup < 0.0 || cfg.sim.warmup >= 1.0) fail("sim.warmup", "must lie in [0, 1)");
    }
}

ModelSpec parse_model(const json& root) {
    const bool shorthand = root.contains("lambda") || root.contains("mu1") || root.contains("mu2");
    int block_cap = 1;
    if (!root.contains("blockCap")) fail("blockCap", "missing");
    block_cap = static_cast<int>(require_number(root["blockCap"], "blockCap"));
    if (block_cap < 1) fail("blockCap", "must be >= 1");

    if (shorthand) {
        for (const char* key : {"lambda", "mu1", "mu2"})
            if (!root.contains(key)) fail(key, "shorthand config needs lambda, mu1 and mu2");
        const double lambda = require_number(root["lambda"], "lambda");
        const double mu1 = require_number(root["mu1"], "mu1");
        const double mu2 = require_number(root["mu2"], "mu2");
        if (lambda <= 0) fail("lambda", "must be positive");
        if (mu1 <= 0) fail("mu1", "must be positive");
        if (mu2 <= 0) fail("mu2", "must be positive");
        Matrix c(1, 1), d(1, 1), t(1, 1), s(1, 1);
        c(0, 0) = -lambda;
        d(0, 0) = lambda;
        t(0, 0) = -mu1;
        s(0, 0) = -mu2;
        return ModelSpec(MarkovArrivalProcess(c, d, "arrivals"),
                         PhaseType(Vec{1.0}, t, "building"),
                         PhaseType(Vec{1.0}, s, "generation"), block_cap);
    }

    for (const char* key : {"arrivals", "generation", "building"})
        if (!root.contains(key) || !root[key].is_object())
            fail(key, "missing section");
    const json& arr = root["arrivals"];
    if (!arr.contains("C") || !arr.contains("D")) fail("arrivals", "needs C and D matrices");
    MarkovArrivalProcess map(parse_matrix(arr["C"], "arrivals.C"), parse_matrix(arr["D"], "arrivals.D"), "arrivals");

    const json& gen = root["generation"];
    if (!gen.contains("beta") || !gen.contains("S")) fail("generation", "needs beta and S");
    PhaseType generation(parse_vector(gen["beta"], "generation.beta"), parse_matrix(gen["S"], "generation.S"),
                         "generation");

    const json& bld = root["building"];
    if (!bld.contains("alpha") || !bld.contains("T")) fail("building", "needs alpha and T");
    PhaseType building(parse_vector(bld["alpha"], "building.alpha"), parse_matrix(bld["T"], "building.T"),
                       "building");

    return ModelSpec(std::move(map), std::move(building), std::move(generation), block_cap);
}

json parse_json_text(const std::string& text) {
    json root = json::parse(text, nullptr, false);
    if (root.is_discarded()) throw ValidationError("config: invalid JSON");
    if (!root.is_object()) throw ValidationError("config: top level must be an object");
    return root;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(path + ": cannot open file");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

} // namespace

LoadedConfig parse_model_config(const std::string& json_text) {
    const json root = parse_json_text(json_text);
    LoadedConfig cfg{parse_model(root), SolverOptions{}, SimConfig{}};
    parse_options(root, cfg);
    return cfg;
}

LoadedConfig load_model_config(const std::string& path) {
    try {
        return parse_model_config(slurp(path));
    } catch (const ValidationError& e) {
        throw ValidationError(path + ": " + e.what());
    }
}

SweepSpec parse_sweep_spec(const std::string& json_text) {
    const json root = parse_json_text(json_text);
    if (!root.contains("parameter") || !root["parameter"].is_string())
        throw ValidationError("parameter: missing or not a string");
    if (!root.contains("base") || !root["base"].is_object())
        throw ValidationError("base: missing model configuration");

    SweepSpec sweep{root["parameter"].get<std::string>(),
                    {},
                    {},
                    parse_model_config(root["base"].dump())};
    if (sweep.parameter != "lambda" && sweep.parameter != "mu1" && sweep.parameter != "mu2" &&
        sweep.parameter != "blockCap")
        throw ValidationError("parameter: must be one of lambda, mu1, mu2, blockCap");

    if (!root.contains("grid")) throw ValidationError("grid: missing");
    sweep.grid = parse_vector(root["grid"], "grid");
    for (size_t i = 1; i < sweep.grid.size(); ++i)
        if (sweep.grid[i] <= sweep.grid[i - 1])
            throw ValidationError("grid: values must be strictly increasing");

    if (root.contains("blockCaps")) {
        const Vec caps = parse_vector(root["blockCaps"], "blockCaps");
        for (double v : caps) {
            if (v < 1 || v != std::floor(v)) throw ValidationError("blockCaps: entries must be positive integers");
            sweep.block_caps.push_back(static_cast<int>(v));
        }
    } else {
        sweep.block_caps.push_back(sweep.base.model.block_cap);
    }
    return sweep;
}

SweepSpec load_sweep_spec(const std::string& path) {
    try {
        return parse_sweep_spec(slurp(path));
    } catch (const ValidationError& e) {
        throw ValidationError(path + ": " + e.what());
    }
}

ModelSpec apply_parameter(const ModelSpec& base, const std::string& parameter, double value, int block_cap) {
    if (parameter == "blockCap")
        return ModelSpec(base.arrivals, base.building, base.generation, static_cast<int>(value));
    if (value <= 0) throw ValidationError("sweep value for " + parameter + " must be positive");
    if (parameter == "lambda") {
        const double current = map_arrival_rate(base.arrivals);
        const double factor = value / current;
        // Scaling D alone would unbalance C+D; scale the whole process clock.
        Matrix c = scale(base.arrivals.c(), factor);
        Matrix d = scale(base.arrivals.d(), factor);
        return ModelSpec(MarkovArrivalProcess(std::move(c), std::move(d), "arrivals"), base.building,
                         base.generation, block_cap);
    }
    if (parameter == "mu1") {
        const double factor = value * ph_mean(base.building);
        return ModelSpec(base.arrivals,
                         PhaseType(base.building.alpha(), scale(base.building.t(), factor), "building"),
                         base.generation, block_cap);
    }
    if (parameter == "mu2") {
        const double factor = value * ph_mean(base.generation);
        return ModelSpec(base.arrivals, base.building,
                         PhaseType(base.generation.alpha(), scale(base.generation.t(), factor), "generation"),
                         block_cap);
    }
    throw ValidationError("unknown sweep parameter " + parameter);
}

std::string csv_number(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

} // namespace blockqueue
