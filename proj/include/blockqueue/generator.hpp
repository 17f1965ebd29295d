#pragma once

#include <vector>

#include "blockqueue/map_ph.hpp"

namespace blockqueue {

// State-space dimensions of the level process. A repeating level k >= 1
// holds stage 0 (generation running, m0*m2 states) followed by stages
// l = 1..b (building a block of l, m0*m1 states each). Boundary level 0
// holds stage 0 (idle, m0 states) followed by the same building stages.
struct LevelDims {
    int m0 = 0, m1 = 0, m2 = 0, b = 0;
    int n0 = 0; // boundary level width: m0 + b*m0*m1
    int n = 0;  // repeating level width: m0*m2 + b*m0*m1

    int rep_stage_offset(int l) const { return l == 0 ? 0 : m0 * m2 + (l - 1) * m0 * m1; }
    int rep_stage_width(int l) const { return l == 0 ? m0 * m2 : m0 * m1; }
    int bnd_stage_offset(int l) const { return l == 0 ? 0 : m0 + (l - 1) * m0 * m1; }
    int bnd_stage_width(int l) const { return l == 0 ? m0 : m0 * m1; }
};

// Assembled generator blocks of the level process.
//
//        | B1  B0           |
//        | B2  A1  A0       |
//  Q  =  | ..      A1  A0   |
//        | Bb+1        ..   |
//        |     Ab1      A1  A0
//        |         Ab1      ...
//
// Down-blocks B2..B_{b+1} share one kernel I (x) (S0 alpha) placed at
// (row stage 0, column stage k) for B_{k+1}; down(k) materializes B_k.
struct LevelBlocks {
    LevelDims dims;
    Matrix a0;  // arrivals, n x n
    Matrix a1;  // within-level, n x n
    Matrix ab1; // batch departure by b levels, n x n
    Matrix b0;  // boundary up, n0 x n
    Matrix b1;  // boundary within-level, n0 x n0
    Matrix s0_alpha; // I (x) (S0 alpha), m0*m2 x m0*m1
    Matrix t0_beta;  // I (x) (T0 beta), m0*m1 x m0*m2

    // B_k for k = 2..b+1 (n x n0).
    Matrix down(int k) const;
};

LevelBlocks build_level_blocks(const ModelSpec& model);

// Finite verification copy of the level process: levels 0..K laid out as in
// the block structure above, the last level's A0 dropped and its diagonal
// adjusted so the truncated generator is conservative. Requires K >= b+2.
Matrix build_truncated_q(const LevelBlocks& blocks, int levels);

} // namespace blockqueue
