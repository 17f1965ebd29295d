#include "blockqueue/map_ph.hpp"

#include <cmath>
#include <string>

namespace blockqueue {

namespace {

constexpr double kRowSumTol = 1e-9; // hand-entered configs carry decimal noise

std::string entry(const std::string& where, const char* name, int i, int j) {
    return where + "." + name + "[" + std::to_string(i) + "][" + std::to_string(j) + "]";
}

} // namespace

MarkovArrivalProcess::MarkovArrivalProcess(Matrix c, Matrix d, const std::string& where)
    : c_(std::move(c)), d_(std::move(d)) {
    if (!c_.square() || !d_.square() || c_.rows != d_.rows)
        throw ValidationError(where + ": C and D must be square with equal order");
    const int n = c_.rows;
    if (n < 1) throw ValidationError(where + ": order must be >= 1");
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (!std::isfinite(c_(i, j)) || !std::isfinite(d_(i, j)))
                throw ValidationError(where + ": entries must be finite");
            if (d_(i, j) < 0.0)
                throw ValidationError(entry(where, "D", i, j) + " is negative");
            if (i != j && c_(i, j) < 0.0)
                throw ValidationError(entry(where, "C", i, j) + " is negative off-diagonal");
        }
        if (c_(i, i) >= 0.0)
            throw ValidationError(entry(where, "C", i, i) + " must be negative");
    }
    const Vec rs = row_sums(c_ + d_);
    for (int i = 0; i < n; ++i)
        if (std::abs(rs[i]) > kRowSumTol)
            throw ValidationError(where + ": row " + std::to_string(i) + " of C+D sums to " +
                                  std::to_string(rs[i]) + ", not zero");
    if (!is_irreducible(c_ + d_))
        throw ValidationError(where + ": C+D is reducible");
}

Vec MarkovArrivalProcess::stationary() const { return ctmc_stationary(c_ + d_); }

PhaseType::PhaseType(Vec alpha, Matrix t, const std::string& where)
    : alpha_(std::move(alpha)), t_(std::move(t)) {
    if (!t_.square()) throw ValidationError(where + ": sub-generator must be square");
    const int n = t_.rows;
    if (n < 1) throw ValidationError(where + ": order must be >= 1");
    if (static_cast<int>(alpha_.size()) != n)
        throw ValidationError(where + ": initial vector length does not match sub-generator order");
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!std::isfinite(alpha_[i]) || alpha_[i] < 0.0)
            throw ValidationError(where + ": initial vector entry " + std::to_string(i) + " invalid");
        sum += alpha_[i];
    }
    if (std::abs(sum - 1.0) > kRowSumTol)
        throw ValidationError(where + ": initial vector sums to " + std::to_string(sum) + ", not 1");
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (!std::isfinite(t_(i, j)))
                throw ValidationError(where + ": sub-generator entries must be finite");
            if (i != j && t_(i, j) < 0.0)
                throw ValidationError(entry(where, "T", i, j) + " is negative off-diagonal");
        }
        if (t_(i, i) >= 0.0)
            throw ValidationError(entry(where, "T", i, i) + " must be negative");
    }
    exit_.assign(n, 0.0);
    const Vec rs = row_sums(t_);
    bool any_exit = false;
    for (int i = 0; i < n; ++i) {
        double e = -rs[i];
        if (e < -kRowSumTol)
            throw ValidationError(where + ": row " + std::to_string(i) + " of T sums above zero");
        if (e < 0.0) e = 0.0;
        if (e > 0.0) any_exit = true;
        exit_[i] = e;
    }
    if (!any_exit)
        throw ValidationError(where + ": exit vector is zero, absorption impossible");
    try {
        LuSolver probe(t_);
    } catch (const NumericalError&) {
        throw ValidationError(where + ": sub-generator is singular");
    }
}

ModelSpec::ModelSpec(MarkovArrivalProcess a, PhaseType build, PhaseType gen, int b)
    : arrivals(std::move(a)), building(std::move(build)), generation(std::move(gen)), block_cap(b) {
    if (b < 1) throw ValidationError("blockCap must be >= 1");
}

double map_arrival_rate(const MarkovArrivalProcess& m) {
    const Vec omega = m.stationary();
    return vec_sum(vec_mat(omega, m.d()));
}

double ph_mean(const PhaseType& p) {
    const Vec x = solve_linear(p.t(), ones(p.order())); // x = T^-1 e
    return -dot(p.alpha(), x);
}

double ph_second_moment(const PhaseType& p) {
    LuSolver lu(p.t());
    const Vec x = lu.solve(ones(p.order()));
    const Vec y = lu.solve(x); // y = T^-2 e
    return 2.0 * dot(p.alpha(), y);
}

PhaseType ph_equilibrium(const PhaseType& p) {
    const int n = p.order();
    Matrix q = p.t();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) q(i, j) += p.exit()[i] * p.alpha()[j];
    Vec varpi;
    try {
        varpi = ctmc_stationary(q);
    } catch (const ValidationError& e) {
        throw ValidationError(std::string("ph_equilibrium: T + T0*alpha is not an irreducible generator (") +
                              e.what() + ")");
    }
    return PhaseType(std::move(varpi), p.t(), "equilibrium phase-type");
}

int sample_weighted(const Vec& weights, double total, RngStream& rng) {
    const double u = rng.uniform() * total;
    double acc = 0.0;
    int last = -1;
    for (size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        acc += weights[i];
        last = static_cast<int>(i);
        if (u < acc) return last;
    }
    return last; // rounding fell past the top; return the last positive weight
}

int sample_initial_phase(const Vec& probs, RngStream& rng) {
    return sample_weighted(probs, 1.0, rng);
}

MapStep map_sample_next(const MarkovArrivalProcess& m, int phase, RngStream& rng) {
    const int n = m.order();
    const double total = -m.c()(phase, phase);
    MapStep step;
    step.holding = rng.exponential(total);
    Vec weights(static_cast<size_t>(2 * n), 0.0);
    for (int j = 0; j < n; ++j) {
        if (j != phase) weights[j] = m.c()(phase, j);
        weights[n + j] = m.d()(phase, j);
    }
    const int pick = sample_weighted(weights, total, rng);
    step.arrival = pick >= n;
    step.next_phase = step.arrival ? pick - n : pick;
    return step;
}

double ph_sample(const PhaseType& p, RngStream& rng) {
    const int n = p.order();
    int phase = sample_initial_phase(p.alpha(), rng);
    double t = 0.0;
    for (;;) {
        const double total = -p.t()(phase, phase);
        t += rng.exponential(total);
        Vec weights(static_cast<size_t>(n + 1), 0.0);
        for (int j = 0; j < n; ++j)
            if (j != phase) weights[j] = p.t()(phase, j);
        weights[n] = p.exit()[phase];
        const int pick = sample_weighted(weights, total, rng);
        if (pick == n) return t;
        phase = pick;
    }
}

} // namespace blockqueue
