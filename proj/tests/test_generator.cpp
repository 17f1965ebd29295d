#include <doctest.h>

#include <cmath>

#include "blockqueue/generator.hpp"
#include "blockqueue/matgeo.hpp"
#include "test_fixtures.hpp"

using namespace blockqueue;

namespace {

Matrix expect3(std::initializer_list<double> vals) {
    Matrix m(3, 3);
    int idx = 0;
    for (double v : vals) m.a[idx++] = v;
    return m;
}

} // namespace

TEST_CASE("block assembly matches the hand fixture (order 1, b = 2)") {
    const double lambda = 1.0, mu1 = 0.7, mu2 = 1.9;
    const auto model = fixtures::exp_model(lambda, mu1, mu2, 2);
    const LevelBlocks lb = build_level_blocks(model);

    REQUIRE(lb.dims.n0 == 3);
    REQUIRE(lb.dims.n == 3);

    CHECK(inf_norm(lb.a0 - expect3({lambda, 0, 0, 0, lambda, 0, 0, 0, lambda})) == 0.0);
    CHECK(inf_norm(lb.a1 - expect3({-lambda - mu2, 0, 0,
                                    mu1, -lambda - mu1, 0,
                                    mu1, 0, -lambda - mu1})) == 0.0);
    Matrix ab1(3, 3);
    ab1(0, 2) = mu2;
    CHECK(inf_norm(lb.ab1 - ab1) == 0.0);

    CHECK(inf_norm(lb.b0 - expect3({lambda, 0, 0, 0, lambda, 0, 0, 0, lambda})) == 0.0);
    CHECK(inf_norm(lb.b1 - expect3({-lambda, 0, 0,
                                    mu1, -lambda - mu1, 0,
                                    mu1, 0, -lambda - mu1})) == 0.0);
    Matrix b2(3, 3), b3(3, 3);
    b2(0, 1) = mu2;
    b3(0, 2) = mu2;
    CHECK(inf_norm(lb.down(2) - b2) == 0.0);
    CHECK(inf_norm(lb.down(3) - b3) == 0.0);
}

TEST_CASE("repeating-level conservation: rows of A0 + A1 + A_{b+1} sum to zero") {
    for (const auto& model : {fixtures::fixture_b2(), fixtures::fixture_map_ph()}) {
        const LevelBlocks lb = build_level_blocks(model);
        const Vec rs = row_sums(lb.a0 + lb.a1 + lb.ab1);
        for (double v : rs) CHECK(std::abs(v) < 1e-12);
    }
}

TEST_CASE("boundary conservation: [B_{k+1} | A1 | A0] and [B1 | B0] rows sum to zero") {
    const auto model = fixtures::fixture_map_ph();
    const LevelBlocks lb = build_level_blocks(model);
    for (int k = 1; k <= lb.dims.b; ++k) {
        Vec rs = row_sums(lb.down(k + 1));
        const Vec rs_a1 = row_sums(lb.a1);
        const Vec rs_a0 = row_sums(lb.a0);
        for (int i = 0; i < lb.dims.n; ++i)
            CHECK(std::abs(rs[i] + rs_a1[i] + rs_a0[i]) < 1e-12);
    }
    const Vec rs_b1 = row_sums(lb.b1);
    const Vec rs_b0 = row_sums(lb.b0);
    for (int i = 0; i < lb.dims.n0; ++i)
        CHECK(std::abs(rs_b1[i] + rs_b0[i]) < 1e-12);
}

TEST_CASE("block dimensions follow the state-space count") {
    const auto model = fixtures::fixture_map_ph();
    const LevelBlocks lb = build_level_blocks(model);
    const int m0 = 2, m1 = 2, m2 = 2, b = 3;
    CHECK(lb.dims.n0 == m0 + b * m0 * m1);
    CHECK(lb.dims.n == m0 * m2 + b * m0 * m1);
    CHECK(lb.a0.rows == lb.dims.n);
    CHECK(lb.b0.rows == lb.dims.n0);
    CHECK(lb.b0.cols == lb.dims.n);
    CHECK(lb.down(2).rows == lb.dims.n);
    CHECK(lb.down(2).cols == lb.dims.n0);
}

TEST_CASE("structural zero blocks stay exactly zero") {
    const auto model = fixtures::fixture_map_ph();
    const LevelBlocks lb = build_level_blocks(model);
    const LevelDims& d = lb.dims;
    // A_{b+1} is zero outside the (stage 0, stage b) block.
    for (int i = 0; i < d.n; ++i)
        for (int j = 0; j < d.n; ++j) {
            const bool live = i < d.rep_stage_width(0) && j >= d.rep_stage_offset(d.b);
            if (!live) CHECK(lb.ab1(i, j) == 0.0);
        }
    // Off-diagonal entries of every block combination are nonnegative.
    const Matrix a = lb.a0 + lb.a1 + lb.ab1;
    for (int i = 0; i < d.n; ++i)
        for (int j = 0; j < d.n; ++j)
            if (i != j) CHECK(a(i, j) >= 0.0);
}

TEST_CASE("truncated generator is conservative") {
    const auto model = fixtures::fixture_b2();
    const LevelBlocks lb = build_level_blocks(model);
    const Matrix q = build_truncated_q(lb, lb.dims.b + 2);
    const Vec rs = row_sums(q);
    for (double v : rs) CHECK(std::abs(v) < 1e-12);
    CHECK_THROWS_AS(build_truncated_q(lb, lb.dims.b + 1), ValidationError);
}

TEST_CASE("truncation level is insensitive once deep enough") {
    const auto model = fixtures::fixture_b2();
    const LevelBlocks lb = build_level_blocks(model);
    const Vec x1 = ctmc_stationary(build_truncated_q(lb, 40));
    const Vec x2 = ctmc_stationary(build_truncated_q(lb, 50));
    // Boundary-level probabilities barely move when the truncation deepens.
    for (int i = 0; i < lb.dims.n0 + lb.dims.n; ++i)
        CHECK(std::abs(x1[i] - x2[i]) < 1e-8);
}
