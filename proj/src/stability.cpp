#include "blockqueue/stability.hpp"

namespace blockqueue {

Matrix drift_matrix(const LevelBlocks& blocks) {
    return blocks.a0 + blocks.a1 + blocks.ab1;
}

namespace {

Matrix corner(const Matrix& a, int r0, int c0, int rows, int cols) {
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = a(r0 + i, c0 + j);
    return m;
}

} // namespace

std::pair<Vec, Vec> invariant_measure(const LevelBlocks& blocks) {
    const LevelDims& d = blocks.dims;
    const Matrix a = drift_matrix(blocks);
    const int w0 = d.rep_stage_width(0);
    const int wb = d.rep_stage_width(d.b);
    const int ob = d.rep_stage_offset(d.b);

    // Two-stage generator over stages 0 and b; stages 1..b-1 receive no
    // inflow in the drift matrix and vanish from the invariant measure.
    Matrix r(w0 + wb, w0 + wb);
    for (int i = 0; i < w0; ++i)
        for (int j = 0; j < w0; ++j) r(i, j) = a(i, j);
    for (int i = 0; i < w0; ++i)
        for (int j = 0; j < wb; ++j) r(i, w0 + j) = a(i, ob + j);
    for (int i = 0; i < wb; ++i)
        for (int j = 0; j < w0; ++j) r(w0 + i, j) = a(ob + i, j);
    for (int i = 0; i < wb; ++i)
        for (int j = 0; j < wb; ++j) r(w0 + i, w0 + j) = a(ob + i, ob + j);

    Vec theta;
    try {
        theta = ctmc_stationary(r);
    } catch (const ValidationError& e) {
        throw ValidationError(std::string("invariant_measure: stage-(0,b) generator rejected (") + e.what() + ")");
    }
    Vec theta0(theta.begin(), theta.begin() + w0);
    Vec thetab(theta.begin() + w0, theta.end());
    return {std::move(theta0), std::move(thetab)};
}

DriftReport is_stable(const LevelBlocks& blocks) {
    const LevelDims& d = blocks.dims;
    DriftReport report;
    auto [theta0, thetab] = invariant_measure(blocks);

    // Upward drift: theta A0 e over the two live stages.
    const Matrix a0_stage0 = corner(blocks.a0, 0, 0, d.rep_stage_width(0), d.rep_stage_width(0));
    const Matrix a0_stageb = corner(blocks.a0, d.rep_stage_offset(d.b), d.rep_stage_offset(d.b),
                                    d.rep_stage_width(d.b), d.rep_stage_width(d.b));
    report.lhs = vec_sum(vec_mat(theta0, a0_stage0)) + vec_sum(vec_mat(thetab, a0_stageb));
    report.rhs = d.b * vec_sum(vec_mat(theta0, blocks.s0_alpha));
    report.stable = report.lhs < report.rhs;
    report.margin = report.rhs - report.lhs;
    report.theta0 = std::move(theta0);
    report.thetab = std::move(thetab);
    return report;
}

bool is_stable_exponential(double lambda, double mu1, double mu2, int b) {
    if (lambda <= 0.0 || mu1 <= 0.0 || mu2 <= 0.0)
        throw ValidationError("is_stable_exponential: rates must be positive");
    if (b < 1) throw ValidationError("is_stable_exponential: block cap must be >= 1");
    return b * mu1 * mu2 / (mu1 + mu2) > lambda;
}

} // namespace blockqueue
