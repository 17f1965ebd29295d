#pragma once

#include "blockqueue/stability.hpp"

namespace blockqueue {

struct RateMatrixR {
    Matrix r;
    double residual = 0.0; // ||R^{b+1} A_{b+1} + R A1 + A0||_inf
    int iterations = 0;
};

// Boundary vectors and rate matrix of the matrix-geometric stationary
// distribution: pi_k = pi_1 R^{k-1} for k >= 2.
struct SteadyState {
    LevelDims dims;
    Vec pi0;         // boundary level, length n0
    Vec pi1;         // first repeating level, length n
    RateMatrixR rate;
    Vec tail_weight; // (I - R)^{-1} e, cached for normalization and means
};

// Minimal nonnegative solution of R^{b+1} A_{b+1} + R A1 + A0 = 0 by the
// fixed-point iteration R <- (R^{b+1} A_{b+1} + A0)(-A1)^{-1} from R = 0,
// with R^{b+1} formed by binary exponentiation. Refuses unstable models.
RateMatrixR compute_rate_matrix(const LevelBlocks& blocks, double tol = 1e-12, int max_iter = 100000);

// Solves the censored boundary system
//   pi0 B1 + pi1 (B2 + R B3 + ... + R^{b-1} B_{b+1}) = 0
//   pi0 B0 + pi1 (A1 + R^b A_{b+1})                  = 0
// normalized by pi0 e + pi1 (I-R)^{-1} e = 1.
SteadyState solve_boundary(const LevelBlocks& blocks, const RateMatrixR& rate);

// pi_k: pi0 for k = 0, pi1 R^{k-1} for k >= 1.
Vec stationary_level(const SteadyState& ss, int level);

// E[N1] = sum_{k>=1} k pi_k e = pi1 (I-R)^{-2} e, mean stationary count in
// the waiting room.
double mean_waiting_count(const SteadyState& ss);

// E[N2] = [pi0 + pi1 (I-R)^{-1}] h with h = (0, e, 2e, ..., b e), mean
// stationary count in the block.
double mean_block_count(const SteadyState& ss);

} // namespace blockqueue
