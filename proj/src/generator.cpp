#include "blockqueue/generator.hpp"

#include <string>

namespace blockqueue {

namespace {

void place(Matrix& dst, int row0, int col0, const Matrix& src) {
    for (int i = 0; i < src.rows; ++i)
        for (int j = 0; j < src.cols; ++j) dst(row0 + i, col0 + j) += src(i, j);
}

Matrix outer(const Vec& col, const Vec& row) {
    Matrix m(static_cast<int>(col.size()), static_cast<int>(row.size()));
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) m(i, j) = col[i] * row[j];
    return m;
}

Matrix row_matrix(const Vec& v) {
    Matrix m(1, static_cast<int>(v.size()));
    for (int j = 0; j < m.cols; ++j) m(0, j) = v[j];
    return m;
}

Matrix col_matrix(const Vec& v) {
    Matrix m(static_cast<int>(v.size()), 1);
    for (int i = 0; i < m.rows; ++i) m(i, 0) = v[i];
    return m;
}

} // namespace

Matrix LevelBlocks::down(int k) const {
    if (k < 2 || k > dims.b + 1)
        throw ValidationError("LevelBlocks::down: k must lie in [2, b+1]");
    Matrix bk(dims.n, dims.n0);
    place(bk, dims.rep_stage_offset(0), dims.bnd_stage_offset(k - 1), s0_alpha);
    return bk;
}

LevelBlocks build_level_blocks(const ModelSpec& model) {
    const int m0 = model.m0(), m1 = model.m1(), m2 = model.m2(), b = model.block_cap;
    LevelBlocks lb;
    lb.dims = LevelDims{m0, m1, m2, b, m0 + b * m0 * m1, m0 * m2 + b * m0 * m1};
    const LevelDims& d = lb.dims;

    const Matrix& c = model.arrivals.c();
    const Matrix& dm = model.arrivals.d();
    const Matrix& t = model.building.t();
    const Matrix& s = model.generation.t();
    const Matrix i_m0 = Matrix::identity(m0);
    const Matrix i_m1 = Matrix::identity(m1);
    const Matrix i_m2 = Matrix::identity(m2);

    lb.s0_alpha = kron_product(i_m0, outer(model.generation.exit(), model.building.alpha()));
    lb.t0_beta = kron_product(i_m0, outer(model.building.exit(), model.generation.alpha()));

    const Matrix d_im1 = kron_product(dm, i_m1);
    const Matrix c_plus_t = kron_sum(c, t);

    lb.a0 = Matrix(d.n, d.n);
    place(lb.a0, 0, 0, kron_product(dm, i_m2));
    for (int l = 1; l <= b; ++l) place(lb.a0, d.rep_stage_offset(l), d.rep_stage_offset(l), d_im1);

    lb.a1 = Matrix(d.n, d.n);
    place(lb.a1, 0, 0, kron_sum(c, s));
    for (int l = 1; l <= b; ++l) {
        place(lb.a1, d.rep_stage_offset(l), d.rep_stage_offset(l), c_plus_t);
        place(lb.a1, d.rep_stage_offset(l), 0, lb.t0_beta);
    }

    lb.ab1 = Matrix(d.n, d.n);
    place(lb.ab1, 0, d.rep_stage_offset(b), lb.s0_alpha);

    lb.b0 = Matrix(d.n0, d.n);
    place(lb.b0, 0, 0, kron_product(dm, row_matrix(model.generation.alpha())));
    for (int l = 1; l <= b; ++l) place(lb.b0, d.bnd_stage_offset(l), d.rep_stage_offset(l), d_im1);

    lb.b1 = Matrix(d.n0, d.n0);
    place(lb.b1, 0, 0, c);
    const Matrix i_t0 = kron_product(i_m0, col_matrix(model.building.exit()));
    for (int l = 1; l <= b; ++l) {
        place(lb.b1, d.bnd_stage_offset(l), d.bnd_stage_offset(l), c_plus_t);
        place(lb.b1, d.bnd_stage_offset(l), 0, i_t0);
    }
    return lb;
}

Matrix build_truncated_q(const LevelBlocks& blocks, int levels) {
    const LevelDims& d = blocks.dims;
    const int b = d.b;
    if (levels < b + 2)
        throw ValidationError("build_truncated_q: need at least b+2 levels, got " + std::to_string(levels));
    const int size = d.n0 + levels * d.n;
    Matrix q(size, size);
    auto level_offset = [&](int k) { return k == 0 ? 0 : d.n0 + (k - 1) * d.n; };

    place(q, 0, 0, blocks.b1);
    place(q, 0, level_offset(1), blocks.b0);
    for (int k = 1; k <= levels; ++k) {
        const int row = level_offset(k);
        place(q, row, row, blocks.a1);
        if (k < levels) place(q, row, level_offset(k + 1), blocks.a0);
        if (k <= b)
            place(q, row, 0, blocks.down(k + 1));
        else
            place(q, row, level_offset(k - b), blocks.ab1);
    }
    // The dropped A0 of the last level goes onto the diagonal, keeping the
    // truncated generator conservative.
    const Vec surplus = row_sums(blocks.a0);
    const int last = level_offset(levels);
    for (int i = 0; i < d.n; ++i) q(last + i, last + i) += surplus[i];
    return q;
}

} // namespace blockqueue
