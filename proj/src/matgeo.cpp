#include "blockqueue/matgeo.hpp"

#include <cmath>
#include <sstream>

namespace blockqueue {

namespace {

// Columns of x at the repeating-level stage-0 block.
Matrix stage0_columns(const Matrix& x, const LevelDims& d) {
    Matrix v(x.rows, d.rep_stage_width(0));
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < v.cols; ++j) v(i, j) = x(i, j);
    return v;
}

} // namespace

RateMatrixR compute_rate_matrix(const LevelBlocks& blocks, double tol, int max_iter) {
    const DriftReport drift = is_stable(blocks);
    if (!drift.stable) {
        std::ostringstream msg;
        msg << "compute_rate_matrix: model is not positive recurrent (arrival drift " << drift.lhs
            << " >= service drift " << drift.rhs << ")";
        throw UnstableModelError(msg.str());
    }
    const int n = blocks.dims.n;
    const unsigned bp1 = static_cast<unsigned>(blocks.dims.b) + 1;
    const Matrix neg_a1_inv = inverse(scale(blocks.a1, -1.0));

    RateMatrixR out;
    out.r = Matrix::zeros(n, n);
    for (int it = 1; it <= max_iter; ++it) {
        const Matrix r_pow = mat_pow(out.r, bp1);
        Matrix next = (r_pow * blocks.ab1 + blocks.a0) * neg_a1_inv;
        for (double& v : next.a)
            if (v < 0.0) v = 0.0; // iteration is nonnegative in exact arithmetic
        const double gap = inf_norm(next - out.r);
        out.r = std::move(next);
        out.iterations = it;
        if (gap <= tol) {
            out.residual = inf_norm(mat_pow(out.r, bp1) * blocks.ab1 + out.r * blocks.a1 + blocks.a0);
            if (out.residual <= tol) return out;
        }
    }
    out.residual = inf_norm(mat_pow(out.r, bp1) * blocks.ab1 + out.r * blocks.a1 + blocks.a0);
    std::ostringstream msg;
    msg << "compute_rate_matrix: no convergence within " << max_iter
        << " iterations (last residual " << out.residual << ")";
    throw NumericalError(msg.str());
}

SteadyState solve_boundary(const LevelBlocks& blocks, const RateMatrixR& rate) {
    const LevelDims& d = blocks.dims;
    const int n0 = d.n0, n = d.n, b = d.b;
    const Matrix& r = rate.r;

    // sum_{k=2}^{b+1} R^{k-2} B_k, built column-block by column-block: only
    // the stage-0 columns of the powers of R enter, via the shared kernel.
    Matrix s2(n, n0);
    Matrix v = stage0_columns(Matrix::identity(n), d); // R^{k-2} restricted to stage-0 columns
    for (int k = 2; k <= b + 1; ++k) {
        const Matrix w = v * blocks.s0_alpha;
        const int col0 = d.bnd_stage_offset(k - 1);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < w.cols; ++j) s2(i, col0 + j) += w(i, j);
        v = r * v;
    }
    const Matrix rb_cols = v; // after the loop v = R^b restricted to stage-0 columns

    // A1 + R^b A_{b+1}; nonzero rows of A_{b+1} live in stage 0.
    Matrix a_low = blocks.a1;
    {
        const Matrix w = rb_cols * blocks.s0_alpha;
        const int col0 = d.rep_stage_offset(b);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < w.cols; ++j) a_low(i, col0 + j) += w(i, j);
    }

    const Matrix i_minus_r = Matrix::identity(n) - r;
    LuSolver imr(i_minus_r);
    const Vec tail_weight = imr.solve(ones(n));

    // Row-vector system (pi0, pi1) M = 0 with the last equation replaced by
    // the normalization pi0 e + pi1 (I-R)^{-1} e = 1.
    const int size = n0 + n;
    Matrix m(size, size);
    for (int i = 0; i < n0; ++i) {
        for (int j = 0; j < n0; ++j) m(i, j) = blocks.b1(i, j);
        for (int j = 0; j < n; ++j) m(i, n0 + j) = blocks.b0(i, j);
    }
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n0; ++j) m(n0 + i, j) = s2(i, j);
        for (int j = 0; j < n; ++j) m(n0 + i, n0 + j) = a_low(i, j);
    }
    for (int i = 0; i < n0; ++i) m(i, size - 1) = 1.0;
    for (int i = 0; i < n; ++i) m(n0 + i, size - 1) = tail_weight[i];

    Vec rhs(static_cast<size_t>(size), 0.0);
    rhs[size - 1] = 1.0;
    Vec x;
    try {
        x = LuSolver(transpose(m)).solve(rhs);
    } catch (const NumericalError& e) {
        throw NumericalError(std::string("solve_boundary: boundary system singular (") + e.what() + ")");
    }
    for (double& val : x) {
        if (val < 0.0) {
            if (val < -1e-9) throw NumericalError("solve_boundary: negative boundary probability " + std::to_string(val));
            val = 0.0;
        }
    }

    SteadyState ss;
    ss.dims = d;
    ss.pi0.assign(x.begin(), x.begin() + n0);
    ss.pi1.assign(x.begin() + n0, x.end());
    ss.rate = rate;
    ss.tail_weight = tail_weight;
    return ss;
}

Vec stationary_level(const SteadyState& ss, int level) {
    if (level < 0) throw ValidationError("stationary_level: level must be >= 0");
    if (level == 0) return ss.pi0;
    Vec v = ss.pi1;
    for (int k = 2; k <= level; ++k) v = vec_mat(v, ss.rate.r);
    return v;
}

double mean_waiting_count(const SteadyState& ss) {
    // sum_{k>=1} k pi_k e with pi_k = pi1 R^{k-1} collapses to pi1 (I-R)^{-2} e.
    const Matrix i_minus_r = Matrix::identity(ss.dims.n) - ss.rate.r;
    LuSolver imr(i_minus_r);
    const Vec w2 = imr.solve(ss.tail_weight); // (I-R)^{-2} e
    return dot(ss.pi1, w2);
}

double mean_block_count(const SteadyState& ss) {
    const LevelDims& d = ss.dims;
    // pi1 (I-R)^{-1} as a row vector.
    const Vec u = LuSolver(transpose(Matrix::identity(d.n) - ss.rate.r)).solve(ss.pi1);
    double total = 0.0;
    for (int l = 1; l <= d.b; ++l) {
        for (int i = 0; i < d.bnd_stage_width(l); ++i)
            total += l * ss.pi0[d.bnd_stage_offset(l) + i];
        for (int i = 0; i < d.rep_stage_width(l); ++i)
            total += l * u[d.rep_stage_offset(l) + i];
    }
    return total;
}

} // namespace blockqueue
