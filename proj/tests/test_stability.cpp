#include <doctest.h>

#include <cmath>

#include "blockqueue/stability.hpp"
#include "test_fixtures.hpp"

using namespace blockqueue;

TEST_CASE("drift matrix equals the sum of the three repeating blocks") {
    const LevelBlocks lb = build_level_blocks(fixtures::fixture_map_ph());
    const Matrix a = drift_matrix(lb);
    CHECK(inf_norm(a - (lb.a0 + lb.a1 + lb.ab1)) == 0.0);
    const Vec rs = row_sums(a);
    for (double v : rs) CHECK(std::abs(v) < 1e-12);
    // Stage-(0,b) block is I (x) (S0 alpha).
    const LevelDims& d = lb.dims;
    for (int i = 0; i < d.rep_stage_width(0); ++i)
        for (int j = 0; j < d.rep_stage_width(d.b); ++j)
            CHECK(a(i, d.rep_stage_offset(d.b) + j) == lb.s0_alpha(i, j));
}

TEST_CASE("invariant measure: symmetric exponential case by hand") {
    // mu1 = mu2 makes the two-stage generator symmetric, so theta0 = thetab = 1/2.
    const auto model = fixtures::exp_model(1.0, 2.0, 2.0, 2);
    const auto [theta0, thetab] = invariant_measure(build_level_blocks(model));
    CHECK(theta0[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(thetab[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("invariant measure: residual against the two-stage generator") {
    const LevelBlocks lb = build_level_blocks(fixtures::fixture_map_ph());
    const auto [theta0, thetab] = invariant_measure(lb);
    const Matrix a = drift_matrix(lb);
    const LevelDims& d = lb.dims;
    // Assemble theta = (theta0, 0, ..., 0, thetab) and check theta A = 0.
    Vec theta(static_cast<size_t>(d.n), 0.0);
    for (int i = 0; i < d.rep_stage_width(0); ++i) theta[i] = theta0[i];
    for (int i = 0; i < d.rep_stage_width(d.b); ++i) theta[d.rep_stage_offset(d.b) + i] = thetab[i];
    CHECK(inf_norm(vec_mat(theta, a)) < 1e-10);
    CHECK(vec_sum(theta) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("full drift solve puts no mass on the middle stages") {
    // The drift matrix is a unichain generator (middle stages are transient),
    // so solve theta A = 0, theta e = 1 directly here.
    const LevelBlocks lb = build_level_blocks(fixtures::fixture_map_ph());
    const Matrix a = drift_matrix(lb);
    Matrix m = transpose(a);
    for (int j = 0; j < m.cols; ++j) m(m.rows - 1, j) = 1.0;
    Vec rhs(static_cast<size_t>(m.rows), 0.0);
    rhs[m.rows - 1] = 1.0;
    const Vec theta = LuSolver(m).solve(rhs);
    const LevelDims& d = lb.dims;
    for (int l = 1; l < d.b; ++l)
        for (int i = 0; i < d.rep_stage_width(l); ++i)
            CHECK(std::abs(theta[d.rep_stage_offset(l) + i]) < 1e-10);
    // And the surviving mass matches invariant_measure.
    const auto [theta0, thetab] = invariant_measure(lb);
    for (int i = 0; i < d.rep_stage_width(0); ++i)
        CHECK(theta[i] == doctest::Approx(theta0[i]).epsilon(1e-9));
    for (int i = 0; i < d.rep_stage_width(d.b); ++i)
        CHECK(theta[d.rep_stage_offset(d.b) + i] == doctest::Approx(thetab[i]).epsilon(1e-9));
}

TEST_CASE("drift verdicts on reference points") {
    // Figure-style operating point: stable.
    CHECK(is_stable(build_level_blocks(fixtures::exp_model(0.3, 0.5, 2.0, 40))).stable);
    // b mu1 mu2 / (mu1 + mu2) = 1 < 1.1: unstable.
    CHECK_FALSE(is_stable(build_level_blocks(fixtures::exp_model(1.1, 2.0, 2.0, 1))).stable);
    CHECK_FALSE(is_stable_exponential(1.1, 2.0, 2.0, 1));
}

TEST_CASE("no arrivals means a stable queue with zero upward drift") {
    Matrix c(2, 2), d(2, 2);
    c(0, 0) = -1.0; c(0, 1) = 1.0;
    c(1, 0) = 1.0;  c(1, 1) = -1.0;
    const ModelSpec model(MarkovArrivalProcess(c, d), fixtures::exponential_ph(1.0),
                          fixtures::exponential_ph(2.0), 2);
    const DriftReport r = is_stable(build_level_blocks(model));
    CHECK(r.stable);
    CHECK(r.lhs == doctest::Approx(0.0));
}

TEST_CASE("exponential stability formula: boundary counts as unstable") {
    CHECK(is_stable_exponential(0.3, 0.5, 2.0, 40));
    CHECK_FALSE(is_stable_exponential(1.0, 2.0, 2.0, 1)); // equals 1, not >
    CHECK_THROWS_AS(is_stable_exponential(-0.1, 1.0, 1.0, 1), ValidationError);
    CHECK_THROWS_AS(is_stable_exponential(0.1, 1.0, 1.0, 0), ValidationError);
}

TEST_CASE("drift predicate agrees with the closed form on a parameter grid") {
    const double lambdas[] = {0.2, 0.7, 1.3, 2.1, 3.5};
    const double mus[] = {0.4, 0.9, 1.6, 2.4, 4.0};
    for (int b : {1, 2, 5})
        for (double lambda : lambdas)
            for (double mu1 : mus)
                for (double mu2 : mus) {
                    const double cap = b * mu1 * mu2 / (mu1 + mu2);
                    if (std::abs(cap - lambda) < 1e-6 * std::max(cap, lambda)) continue;
                    const auto model = fixtures::exp_model(lambda, mu1, mu2, b);
                    CHECK(is_stable(build_level_blocks(model)).stable ==
                          is_stable_exponential(lambda, mu1, mu2, b));
                }
}

TEST_CASE("growing the block cap never destabilizes") {
    const double lambdas[] = {0.3, 0.9, 1.8};
    const double mus[] = {0.5, 1.1, 2.2};
    for (double lambda : lambdas)
        for (double mu1 : mus)
            for (double mu2 : mus) {
                bool was_stable = false;
                for (int b : {1, 2, 3, 5, 8}) {
                    const bool now = is_stable(build_level_blocks(fixtures::exp_model(lambda, mu1, mu2, b))).stable;
                    if (was_stable) CHECK(now);
                    was_stable = now;
                }
            }
}

TEST_CASE("theta components are nonnegative and normalized") {
    const auto [theta0, thetab] = invariant_measure(build_level_blocks(fixtures::fixture_map_ph()));
    for (double v : theta0) CHECK(v >= 0.0);
    for (double v : thetab) CHECK(v >= 0.0);
    CHECK(std::abs(vec_sum(theta0) + vec_sum(thetab) - 1.0) < 1e-12);
}
