#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "blockqueue/config.hpp"
#include "blockqueue/confirmation.hpp"
#include "blockqueue/matgeo.hpp"
#include "blockqueue/simulator.hpp"

using namespace blockqueue;

namespace {

constexpr const char* kSolveHeader =
    "lambda,mu1,mu2,b,EN1,EN2,EConfirm,VarXi,R_residual,truncationK,wallclock_ms,status";

struct GlobalOpts {
    double tol = 0.0;     // 0 = keep config value
    int max_iter = 0;
    int trunc_k = -1;
    long seed = -1;
    int confirm_cap = -1;
    bool fast = false;
    bool timing = false;
};

void apply_overrides(LoadedConfig& cfg, const GlobalOpts& g) {
    if (g.tol > 0.0) cfg.solver.tolerance = g.tol;
    if (g.max_iter > 0) cfg.solver.max_iter = g.max_iter;
    if (g.trunc_k >= 0) cfg.solver.truncation_k = g.trunc_k;
    if (g.confirm_cap >= 0) cfg.solver.confirm_cap = g.confirm_cap;
    if (g.seed >= 0) cfg.sim.seed = static_cast<uint64_t>(g.seed);
}

struct SolveRow {
    double lambda = 0.0, mu1 = 0.0, mu2 = 0.0;
    int b = 0;
    double en1 = std::numeric_limits<double>::quiet_NaN();
    double en2 = std::numeric_limits<double>::quiet_NaN();
    double econfirm = std::numeric_limits<double>::quiet_NaN();
    double varxi = std::numeric_limits<double>::quiet_NaN();
    double r_residual = std::numeric_limits<double>::quiet_NaN();
    int trunc_k = 0;
    double wall_ms = 0.0;
    std::string status = "ok";
};

void describe(SolveRow& row, const ModelSpec& model) {
    row.lambda = map_arrival_rate(model.arrivals);
    row.mu1 = 1.0 / ph_mean(model.building);
    row.mu2 = 1.0 / ph_mean(model.generation);
    row.b = model.block_cap;
}

SolveRow solve_point(const ModelSpec& model, const SolverOptions& opts, bool timing) {
    SolveRow row;
    describe(row, model);
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const LevelBlocks blocks = build_level_blocks(model);
        const RateMatrixR rate = compute_rate_matrix(blocks, opts.tolerance, opts.max_iter);
        const SteadyState ss = solve_boundary(blocks, rate);
        row.en1 = mean_waiting_count(ss);
        row.en2 = mean_block_count(ss);
        row.r_residual = rate.residual;
        if (model.block_cap <= opts.confirm_cap) {
            const ConfirmationReport rep = mean_confirmation_time(model, ss, opts.truncation_k);
            row.econfirm = rep.mean_confirmation;
            row.varxi = rep.var_first_passage;
            row.trunc_k = rep.truncation_levels;
        }
    } catch (const UnstableModelError&) {
        row.status = "unstable";
    }
    if (timing) {
        row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    return row;
}

void write_row(std::ostream& out, const SolveRow& row) {
    out << csv_number(row.lambda) << ',' << csv_number(row.mu1) << ',' << csv_number(row.mu2) << ','
        << row.b << ',' << csv_number(row.en1) << ',' << csv_number(row.en2) << ','
        << csv_number(row.econfirm) << ',' << csv_number(row.varxi) << ','
        << csv_number(row.r_residual) << ',' << row.trunc_k << ',' << csv_number(row.wall_ms) << ','
        << row.status << '\n';
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary); // LF line endings on every platform
    if (!out) throw ValidationError(path + ": cannot open for writing");
    return out;
}

int worker_count(size_t jobs) {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("BLOCKQUEUE_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) hw = static_cast<unsigned>(v);
    }
    return static_cast<int>(std::min<size_t>(hw, jobs));
}

int cmd_validate(const std::string& config_path, const GlobalOpts& g) {
    LoadedConfig cfg = load_model_config(config_path);
    apply_overrides(cfg, g);
    const ModelSpec& model = cfg.model;
    std::cout << "orders: m0=" << model.m0() << " m1=" << model.m1() << " m2=" << model.m2() << '\n'
              << "blockCap: " << model.block_cap << '\n'
              << "lambda: " << csv_number(map_arrival_rate(model.arrivals)) << '\n'
              << "mean building time (1/mu1): " << csv_number(ph_mean(model.building)) << '\n'
              << "mean generation time (1/mu2): " << csv_number(ph_mean(model.generation)) << '\n';
    const DriftReport drift = is_stable(build_level_blocks(model));
    std::cout << "drift: arrivals " << csv_number(drift.lhs) << " vs service " << csv_number(drift.rhs)
              << " (margin " << csv_number(drift.margin) << ")\n"
              << "stability: " << (drift.stable ? "stable" : "unstable") << '\n';
    return drift.stable ? 0 : 1;
}

int cmd_solve(const std::string& config_path, const std::string& out_path, const GlobalOpts& g) {
    LoadedConfig cfg = load_model_config(config_path);
    apply_overrides(cfg, g);
    const SolveRow row = solve_point(cfg.model, cfg.solver, g.timing);
    if (row.status == "unstable") {
        const DriftReport drift = is_stable(build_level_blocks(cfg.model));
        std::cerr << "model is not positive recurrent: arrival drift " << csv_number(drift.lhs)
                  << " >= service drift " << csv_number(drift.rhs) << '\n';
        return 1;
    }
    auto out = open_output(out_path);
    out << kSolveHeader << '\n';
    write_row(out, row);
    return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& out_path, const GlobalOpts& g) {
    LoadedConfig cfg = load_model_config(config_path);
    apply_overrides(cfg, g);
    const SimEstimates est = simulate(cfg.model, cfg.sim);
    SolveRow ids;
    describe(ids, cfg.model);
    auto out = open_output(out_path);
    out << "lambda,mu1,mu2,b,meanN1,seN1,meanN2,seN2,meanSojourn,seSojourn,varSojourn,"
           "replications,horizonEvents,seed,warmup,unstableTrend\n";
    out << csv_number(ids.lambda) << ',' << csv_number(ids.mu1) << ',' << csv_number(ids.mu2) << ','
        << ids.b << ',' << csv_number(est.mean_n1) << ',' << csv_number(est.se_n1) << ','
        << csv_number(est.mean_n2) << ',' << csv_number(est.se_n2) << ','
        << csv_number(est.mean_sojourn) << ',' << csv_number(est.se_sojourn) << ','
        << csv_number(est.var_sojourn) << ',' << est.replications << ',' << est.horizon_events << ','
        << est.seed << ',' << csv_number(cfg.sim.warmup) << ',' << (est.unstable_trend ? 1 : 0) << '\n';
    return 0;
}

int cmd_sweep(const std::string& sweep_path, const std::string& out_path, const GlobalOpts& g) {
    SweepSpec sweep = load_sweep_spec(sweep_path);
    apply_overrides(sweep.base, g);

    struct Point {
        int block_cap;
        double value;
    };
    std::vector<Point> points;
    for (int b : sweep.block_caps)
        for (double v : sweep.grid)
            points.push_back(Point{sweep.parameter == "blockCap" ? static_cast<int>(v) : b, v});

    std::vector<SolveRow> rows(points.size());
    std::atomic<size_t> next{0};
    auto work = [&]() {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= points.size()) return;
            const Point& p = points[i];
            if (g.fast && p.block_cap > 100) {
                SolveRow row;
                row.b = p.block_cap;
                try {
                    describe(row, apply_parameter(sweep.base.model, sweep.parameter, p.value, p.block_cap));
                } catch (const std::exception&) {
                }
                row.status = "skipped_fast";
                rows[i] = row;
                continue;
            }
            try {
                const ModelSpec model =
                    apply_parameter(sweep.base.model, sweep.parameter, p.value, p.block_cap);
                rows[i] = solve_point(model, sweep.base.solver, g.timing);
            } catch (const std::exception& e) {
                SolveRow row;
                row.b = p.block_cap;
                row.status = "error";
                rows[i] = row;
                std::cerr << "sweep point " << sweep.parameter << "=" << p.value << " b=" << p.block_cap
                          << " failed: " << e.what() << '\n';
            }
        }
    };
    const int workers = worker_count(points.size());
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < workers; ++i) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }

    auto out = open_output(out_path);
    out << kSolveHeader << '\n';
    for (const SolveRow& row : rows) write_row(out, row);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Matrix-analytic solver and simulator for a two-stage batch-service transaction queue"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--tol", g.tol, "Rate-matrix iteration tolerance override");
    app.add_option("--max-iter", g.max_iter, "Rate-matrix iteration cap override");
    app.add_option("--trunc-k", g.trunc_k, "Minimum truncation level for confirmation times");
    app.add_option("--seed", g.seed, "Simulation seed override");
    app.add_option("--confirm-cap", g.confirm_cap, "Largest block cap for which confirmation times are computed");
    app.add_flag("--fast", g.fast, "Skip sweep points with blockCap > 100");
    app.add_flag("--timing", g.timing, "Record wall-clock times in CSV output (breaks byte-stability)");

    std::string config_path, out_path;
    auto* validate = app.add_subcommand("validate", "Parse a model config and report rates and stability");
    validate->add_option("config", config_path, "Model config (JSON)")->required();

    auto* solve = app.add_subcommand("solve", "Stationary measures and confirmation time to CSV");
    solve->add_option("config", config_path, "Model config (JSON)")->required();
    solve->add_option("-o,--output", out_path, "Output CSV path")->required();

    auto* simulate_cmd = app.add_subcommand("simulate", "Discrete-event estimates to CSV");
    simulate_cmd->add_option("config", config_path, "Model config (JSON)")->required();
    simulate_cmd->add_option("-o,--output", out_path, "Output CSV path")->required();

    auto* sweep = app.add_subcommand("sweep", "Solve a parameter grid to CSV");
    sweep->add_option("sweep", config_path, "Sweep spec (JSON)")->required();
    sweep->add_option("-o,--output", out_path, "Output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) return cmd_validate(config_path, g);
        if (solve->parsed()) return cmd_solve(config_path, out_path, g);
        if (simulate_cmd->parsed()) return cmd_simulate(config_path, out_path, g);
        if (sweep->parsed()) return cmd_sweep(config_path, out_path, g);
    } catch (const UnstableModelError& e) {
        std::cerr << e.what() << '\n';
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        return 3;
    }
    return 0;
}
