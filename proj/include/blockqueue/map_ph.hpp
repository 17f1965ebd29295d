#pragma once

#include <string>

#include "blockqueue/linalg.hpp"
#include "blockqueue/rng.hpp"

namespace blockqueue {

// Markovian arrival process (C, D): C holds environment-only transition
// rates, D holds arrival-marked rates; C + D is a conservative irreducible
// generator. Immutable after construction; construction validates.
class MarkovArrivalProcess {
public:
    MarkovArrivalProcess(Matrix c, Matrix d, const std::string& where = "arrivals");

    int order() const { return c_.rows; }
    const Matrix& c() const { return c_; }
    const Matrix& d() const { return d_; }

    // Stationary vector of C + D.
    Vec stationary() const;

private:
    Matrix c_, d_;
};

// Phase-type distribution (alpha, T); exit vector T0 = -T e.
class PhaseType {
public:
    PhaseType(Vec alpha, Matrix t, const std::string& where = "phase-type");

    int order() const { return t_.rows; }
    const Vec& alpha() const { return alpha_; }
    const Matrix& t() const { return t_; }
    const Vec& exit() const { return exit_; }

private:
    Vec alpha_;
    Matrix t_;
    Vec exit_;
};

// The full queueing model: MAP transaction arrivals, PH block-generation
// (beta, S), PH blockchain-building (alpha, T), and block cap b.
//
// Naming note: the generation stage carries service rate mu2 = 1/(-beta S^-1 e)
// and the building stage mu1 = 1/(-alpha T^-1 e), consistent with the
// exponential special case b*mu1*mu2/(mu1+mu2) > lambda.
struct ModelSpec {
    MarkovArrivalProcess arrivals;
    PhaseType building;   // (alpha, T), order m1
    PhaseType generation; // (beta, S), order m2
    int block_cap;

    ModelSpec(MarkovArrivalProcess a, PhaseType build, PhaseType gen, int b);

    int m0() const { return arrivals.order(); }
    int m1() const { return building.order(); }
    int m2() const { return generation.order(); }
};

// lambda = omega D e with omega stationary for C + D.
double map_arrival_rate(const MarkovArrivalProcess& m);

// Mean -alpha T^-1 e.
double ph_mean(const PhaseType& p);

// Second moment 2 alpha T^-2 e.
double ph_second_moment(const PhaseType& p);

// Stationary-excess version: (varpi, T) with varpi stationary for T + T0 alpha.
PhaseType ph_equilibrium(const PhaseType& p);

struct MapStep {
    double holding;
    int next_phase;
    bool arrival;
};

// One exact MAP transition from the given phase: exponential sojourn at the
// full exit rate -C(i,i), next event chosen among off-diagonal C entries and
// all D entries; the arrival flag marks a D-transition.
MapStep map_sample_next(const MarkovArrivalProcess& m, int phase, RngStream& rng);

// Exact draw from PH(alpha, T) by simulating the phase chain to absorption.
double ph_sample(const PhaseType& p, RngStream& rng);

// Draw an index from a discrete distribution given as nonnegative weights.
int sample_weighted(const Vec& weights, double total, RngStream& rng);

// Draw an initial phase from a probability vector.
int sample_initial_phase(const Vec& probs, RngStream& rng);

} // namespace blockqueue
