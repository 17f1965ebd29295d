#pragma once

#include "blockqueue/generator.hpp"

namespace blockqueue {

// Mean-drift stability verdict. The invariant measure of A0 + A1 + A_{b+1}
// concentrates on stages 0 and b; lhs is the upward (arrival) rate, rhs the
// downward (full-batch departure) rate b * theta0 [I (x) (S0 alpha)] e.
struct DriftReport {
    Vec theta0;    // stage-0 component, length m0*m2
    Vec thetab;    // stage-b component, length m0*m1
    double lhs = 0.0;
    double rhs = 0.0;
    bool stable = false;
    double margin = 0.0; // rhs - lhs
};

// A = A0 + A1 + A_{b+1}; conservative generator of order n.
Matrix drift_matrix(const LevelBlocks& blocks);

// (theta0, thetab): stationary vector of the two-stage generator formed by
// the corner blocks of the drift matrix; stages 1..b-1 carry no mass.
std::pair<Vec, Vec> invariant_measure(const LevelBlocks& blocks);

// Positive recurrence holds iff lhs < rhs (strictly; the boundary counts as
// unstable).
DriftReport is_stable(const LevelBlocks& blocks);

// Exponential special case: b*mu1*mu2/(mu1+mu2) > lambda.
bool is_stable_exponential(double lambda, double mu1, double mu2, int b);

} // namespace blockqueue
