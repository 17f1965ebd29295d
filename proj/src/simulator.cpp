#include "blockqueue/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace blockqueue {

namespace {

enum class Mode { Idle, Mining, Building };

enum SeenClass { kSeenGeneration = 0, kSeenBuilding = 1, kSeenIdle = 2 };

struct Txn {
    double arrived;
    int8_t seen;
};

struct Accum {
    double sum = 0.0, sumsq = 0.0;
    long count = 0;
    void add(double x) { sum += x; sumsq += x * x; ++count; }
    double mean() const { return count > 0 ? sum / count : 0.0; }
    double variance() const {
        if (count < 2) return 0.0;
        return std::max(0.0, (sumsq - sum * sum / count) / (count - 1));
    }
};

struct RepResult {
    double mean_n1 = 0.0, mean_n2 = 0.0;
    double mean_sojourn = 0.0, var_sojourn = 0.0;
    long sojourn_count = 0;
    double quarter_n1[4] = {0, 0, 0, 0};
    long arrivals = 0, departures = 0, in_system = 0;
    int max_block = 0;
    std::vector<SelectionCell> selection;
    long nonempty_arrivals = 0;      // arrivals that found the system nonempty
    long seen_generation_count = 0;  // of those, how many found generation running
    Accum sojourn_by_class[3];

    double frac_seen_generation() const {
        return nonempty_arrivals > 0 ? static_cast<double>(seen_generation_count) / nonempty_arrivals : 0.0;
    }
};

int pick_transition(const Vec& weights, double total, RngStream& rng) {
    const double u = rng.uniform() * total;
    double acc = 0.0;
    int last = -1;
    for (size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        acc += weights[i];
        last = static_cast<int>(i);
        if (u < acc) break;
    }
    return last;
}

RepResult run_replication(const ModelSpec& model, const SimConfig& cfg, RngStream rng) {
    const Matrix& c = model.arrivals.c();
    const Matrix& dmat = model.arrivals.d();
    const Matrix& t = model.building.t();
    const Matrix& s = model.generation.t();
    const Vec& t0 = model.building.exit();
    const Vec& s0 = model.generation.exit();
    const int m0 = model.m0(), m1 = model.m1(), m2 = model.m2();
    const int b = model.block_cap;

    RepResult rep;
    rep.selection.assign(static_cast<size_t>(b + 18), SelectionCell{});

    int map_phase = 0;
    Mode mode = Mode::Idle;
    int service_phase = 0;
    std::vector<Txn> waiting;
    std::vector<Txn> block;
    waiting.reserve(1024);
    block.reserve(static_cast<size_t>(std::min(b, 1 << 20)));

    double now = 0.0;
    const long warm_events = static_cast<long>(cfg.warmup * static_cast<double>(cfg.horizon_events));
    double stats_start_time = 0.0;
    bool recording = warm_events == 0;
    double int_n1 = 0.0, int_n2 = 0.0;
    Accum sojourn;
    // Four equal event windows over the measurement phase for the divergence probe.
    const long window = std::max<long>(1, (cfg.horizon_events - warm_events) / 4);
    double win_int_n1 = 0.0, win_start = 0.0;
    int win_idx = 0;

    Vec weights;
    for (long ev = 0; ev < cfg.horizon_events; ++ev) {
        if (!recording && ev >= warm_events) {
            recording = true;
            stats_start_time = now;
            win_start = now;
        }
        double total = -c(map_phase, map_phase);
        if (mode == Mode::Mining) total += -s(service_phase, service_phase);
        if (mode == Mode::Building) total += -t(service_phase, service_phase);
        const double hold = rng.exponential(total);
        if (recording) {
            int_n1 += waiting.size() * hold;
            int_n2 += block.size() * hold;
            win_int_n1 += waiting.size() * hold;
        }
        now += hold;

        // Competing exponentials: MAP transitions against the active stage.
        const int svc_n = mode == Mode::Mining ? m2 : (mode == Mode::Building ? m1 : 0);
        weights.assign(static_cast<size_t>(2 * m0 + svc_n + 1), 0.0);
        for (int j = 0; j < m0; ++j) {
            if (j != map_phase) weights[j] = c(map_phase, j);
            weights[m0 + j] = dmat(map_phase, j);
        }
        if (mode == Mode::Mining) {
            for (int j = 0; j < m2; ++j)
                if (j != service_phase) weights[2 * m0 + j] = s(service_phase, j);
            weights[2 * m0 + m2] = s0[service_phase];
        } else if (mode == Mode::Building) {
            for (int j = 0; j < m1; ++j)
                if (j != service_phase) weights[2 * m0 + j] = t(service_phase, j);
            weights[2 * m0 + m1] = t0[service_phase];
        }
        const int pick = pick_transition(weights, total, rng);

        if (pick < m0) {
            map_phase = pick; // environment move, no arrival
        } else if (pick < 2 * m0) {
            // Arrival. Snapshot the state it finds, then enqueue.
            map_phase = pick - m0;
            int8_t seen = kSeenIdle;
            if (mode == Mode::Mining) seen = kSeenGeneration;
            else if (mode == Mode::Building) seen = kSeenBuilding;
            ++rep.arrivals; // whole-run count, so conservation closes exactly
            if (recording) {
                if (!waiting.empty() || mode == Mode::Mining) {
                    ++rep.nonempty_arrivals;
                    if (seen == kSeenGeneration) ++rep.seen_generation_count;
                }
            }
            waiting.push_back(Txn{now, seen});
            if (mode == Mode::Idle) {
                mode = Mode::Mining; // first arrival to an idle system starts generation
                service_phase = sample_initial_phase(model.generation.alpha(), rng);
            }
        } else if (pick < 2 * m0 + svc_n) {
            service_phase = pick - 2 * m0; // service phase move
        } else if (mode == Mode::Mining) {
            // Generation complete: fill the block with a uniform random subset
            // of min(k, b) waiters and start building.
            const int k = static_cast<int>(waiting.size());
            const int take = std::min(k, b);
            if (k > b) {
                // Track a uniformly designated waiter through the shuffle to
                // sample the inclusion probability without bias.
                long designated = static_cast<long>(rng.uniform_int(static_cast<uint64_t>(k)));
                for (int j = 0; j < take; ++j) {
                    const long r = j + static_cast<long>(rng.uniform_int(static_cast<uint64_t>(k - j)));
                    std::swap(waiting[static_cast<size_t>(j)], waiting[static_cast<size_t>(r)]);
                    if (designated == r) designated = j;
                    else if (designated == j) designated = r;
                }
                if (recording && k < static_cast<int>(rep.selection.size())) {
                    ++rep.selection[static_cast<size_t>(k)].trials;
                    if (designated < take) ++rep.selection[static_cast<size_t>(k)].included;
                }
            } else if (recording && k < static_cast<int>(rep.selection.size())) {
                ++rep.selection[static_cast<size_t>(k)].trials;
                ++rep.selection[static_cast<size_t>(k)].included; // everyone fits
            }
            block.assign(waiting.begin(), waiting.begin() + take);
            waiting.erase(waiting.begin(), waiting.begin() + take);
            rep.max_block = std::max(rep.max_block, take);
            mode = Mode::Building;
            service_phase = sample_initial_phase(model.building.alpha(), rng);
        } else {
            // Building complete: the block is pegged, its transactions leave.
            for (const Txn& txn : block) {
                if (recording && txn.arrived >= stats_start_time) {
                    const double d = now - txn.arrived;
                    sojourn.add(d);
                    rep.sojourn_by_class[txn.seen].add(d);
                }
                ++rep.departures;
            }
            block.clear();
            if (!waiting.empty()) {
                mode = Mode::Mining;
                service_phase = sample_initial_phase(model.generation.alpha(), rng);
            } else {
                mode = Mode::Idle;
                service_phase = 0;
            }
        }

        if (recording && win_idx < 4 && (ev - warm_events + 1) % window == 0) {
            const double span = now - win_start;
            rep.quarter_n1[win_idx++] = span > 0.0 ? win_int_n1 / span : 0.0;
            win_int_n1 = 0.0;
            win_start = now;
        }
    }

    const double span = now - stats_start_time;
    rep.mean_n1 = span > 0.0 ? int_n1 / span : 0.0;
    rep.mean_n2 = span > 0.0 ? int_n2 / span : 0.0;
    rep.mean_sojourn = sojourn.mean();
    rep.var_sojourn = sojourn.variance();
    rep.sojourn_count = sojourn.count;
    rep.in_system = static_cast<long>(waiting.size() + block.size());
    return rep;
}

int worker_count(int replications) {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("BLOCKQUEUE_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) hw = static_cast<unsigned>(v);
    }
    return static_cast<int>(std::min<unsigned>(hw, static_cast<unsigned>(replications)));
}

struct MeanSe {
    double mean = 0.0, se = 0.0;
};

template <typename Get>
MeanSe across_reps(const std::vector<RepResult>& reps, Get get) {
    MeanSe r;
    const int n = static_cast<int>(reps.size());
    if (n == 0) return r;
    double sum = 0.0;
    for (const auto& rep : reps) sum += get(rep);
    r.mean = sum / n;
    if (n > 1) {
        double ss = 0.0;
        for (const auto& rep : reps) {
            const double d = get(rep) - r.mean;
            ss += d * d;
        }
        r.se = std::sqrt(ss / (n - 1) / n);
    }
    return r;
}

// Conditional means only exist in replications that observed the class.
MeanSe across_reps_class(const std::vector<RepResult>& reps, int cls) {
    std::vector<RepResult> seen;
    for (const auto& rep : reps)
        if (rep.sojourn_by_class[cls].count > 0) seen.push_back(rep);
    return across_reps(seen, [cls](const RepResult& r) { return r.sojourn_by_class[cls].mean(); });
}

SimEstimates aggregate(const ModelSpec& model, const SimConfig& cfg, std::vector<RepResult> reps) {
    SimEstimates est;
    est.replications = static_cast<int>(reps.size());
    est.horizon_events = cfg.horizon_events;
    est.seed = cfg.seed;

    const auto n1 = across_reps(reps, [](const RepResult& r) { return r.mean_n1; });
    est.mean_n1 = n1.mean;
    est.se_n1 = n1.se;
    const auto n2 = across_reps(reps, [](const RepResult& r) { return r.mean_n2; });
    est.mean_n2 = n2.mean;
    est.se_n2 = n2.se;
    const auto so = across_reps(reps, [](const RepResult& r) { return r.mean_sojourn; });
    est.mean_sojourn = so.mean;
    est.se_sojourn = so.se;
    const auto vs = across_reps(reps, [](const RepResult& r) { return r.var_sojourn; });
    est.var_sojourn = vs.mean;
    est.se_var_sojourn = vs.se;

    est.selection.assign(static_cast<size_t>(model.block_cap + 18), SelectionCell{});
    for (const auto& rep : reps) {
        est.sojourn_count += rep.sojourn_count;
        est.arrivals += rep.arrivals;
        est.departures += rep.departures;
        est.in_system_at_end += rep.in_system;
        est.max_block = std::max(est.max_block, rep.max_block);
        for (size_t k = 0; k < rep.selection.size() && k < est.selection.size(); ++k) {
            est.selection[k].included += rep.selection[k].included;
            est.selection[k].trials += rep.selection[k].trials;
        }
    }

    const auto fg = across_reps(reps, [](const RepResult& r) { return r.frac_seen_generation(); });
    est.frac_seen_generation = fg.mean;
    est.se_frac_seen_generation = fg.se;
    const auto s0m = across_reps_class(reps, kSeenGeneration);
    est.mean_sojourn_seen_generation = s0m.mean;
    est.se_sojourn_seen_generation = s0m.se;
    const auto s1m = across_reps_class(reps, kSeenBuilding);
    est.mean_sojourn_seen_building = s1m.mean;
    est.se_sojourn_seen_building = s1m.se;
    const auto s2m = across_reps_class(reps, kSeenIdle);
    est.mean_sojourn_seen_idle = s2m.mean;
    est.se_sojourn_seen_idle = s2m.se;

    // Divergence probe: the N1 time-average rising across every window in
    // every replication marks an unstable run.
    bool all_rising = !reps.empty();
    for (const auto& rep : reps) {
        bool rising = true;
        for (int w = 1; w < 4; ++w) rising = rising && rep.quarter_n1[w] > rep.quarter_n1[w - 1];
        all_rising = all_rising && rising;
    }
    est.unstable_trend = all_rising;
    return est;
}

} // namespace

SimEstimates simulate(const ModelSpec& model, const SimConfig& cfg) {
    if (cfg.horizon_events <= 0) throw ValidationError("sim.horizon must be positive");
    if (cfg.replications < 1) throw ValidationError("sim.replications must be >= 1");
    if (cfg.warmup < 0.0 || cfg.warmup >= 1.0) throw ValidationError("sim.warmup must lie in [0, 1)");

    const RngStream root(cfg.seed);
    std::vector<RepResult> reps(static_cast<size_t>(cfg.replications));
    std::atomic<int> next{0};
    auto work = [&]() {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= cfg.replications) return;
            reps[static_cast<size_t>(i)] =
                run_replication(model, cfg, root.substream(static_cast<uint64_t>(i)));
        }
    };
    const int workers = worker_count(cfg.replications);
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(workers));
        for (int i = 0; i < workers; ++i) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }

    return aggregate(model, cfg, std::move(reps));
}

SimEstimates simulate_tagged(const ModelSpec& model, const SimConfig& cfg) {
    return simulate(model, cfg);
}

} // namespace blockqueue
