#include <doctest.h>

#include <cmath>

#include "blockqueue/matgeo.hpp"
#include "test_fixtures.hpp"

using namespace blockqueue;

namespace {

double defining_residual(const LevelBlocks& lb, const Matrix& r) {
    const unsigned bp1 = static_cast<unsigned>(lb.dims.b) + 1;
    return inf_norm(mat_pow(r, bp1) * lb.ab1 + r * lb.a1 + lb.a0);
}

} // namespace

TEST_CASE("rate matrix: zero arrivals give R = 0 in one iteration") {
    Matrix c(2, 2), d(2, 2);
    c(0, 0) = -1.0; c(0, 1) = 1.0;
    c(1, 0) = 1.0;  c(1, 1) = -1.0;
    const ModelSpec model(MarkovArrivalProcess(c, d), fixtures::exponential_ph(1.0),
                          fixtures::exponential_ph(2.0), 2);
    const LevelBlocks lb = build_level_blocks(model);
    const RateMatrixR rm = compute_rate_matrix(lb);
    CHECK(rm.iterations == 1);
    CHECK(inf_norm(rm.r) == 0.0);
}

TEST_CASE("rate matrix on the b=2 fixture: residual and spectral radius") {
    const LevelBlocks lb = build_level_blocks(fixtures::exp_model(0.3, 1.0, 2.0, 2));
    const RateMatrixR rm = compute_rate_matrix(lb);
    CHECK(rm.residual <= 1e-12);
    CHECK(defining_residual(lb, rm.r) <= 1e-12);
    CHECK(spectral_radius(rm.r) < 1.0);
    for (double v : rm.r.a) CHECK(v >= 0.0);
}

TEST_CASE("rate matrix is at a convergence plateau") {
    const LevelBlocks lb = build_level_blocks(fixtures::fixture_map_ph());
    const RateMatrixR a = compute_rate_matrix(lb, 1e-12, 50000);
    const RateMatrixR b = compute_rate_matrix(lb, 1e-12, 100000);
    CHECK(inf_norm(a.r - b.r) <= 1e-12);
}

TEST_CASE("rate matrix refuses unstable models") {
    const LevelBlocks lb = build_level_blocks(fixtures::exp_model(1.1, 2.0, 2.0, 1));
    CHECK_THROWS_AS(compute_rate_matrix(lb), UnstableModelError);
}

TEST_CASE("rate matrix reports the last residual when the iteration cap is hit") {
    const LevelBlocks lb = build_level_blocks(fixtures::fixture_map_ph());
    CHECK_THROWS_WITH_AS(compute_rate_matrix(lb, 1e-12, 2), doctest::Contains("residual"),
                         NumericalError);
}

TEST_CASE("boundary solve satisfies both censored balance equations") {
    for (const auto& model : {fixtures::fixture_b2(), fixtures::fixture_map_ph()}) {
        const LevelBlocks lb = build_level_blocks(model);
        const RateMatrixR rm = compute_rate_matrix(lb);
        const SteadyState ss = solve_boundary(lb, rm);
        const LevelDims& d = lb.dims;

        // pi0 B1 + pi1 (B2 + R B3 + ... + R^{b-1} B_{b+1}) = 0
        Vec eq1 = vec_mat(ss.pi0, lb.b1);
        Matrix rp = Matrix::identity(d.n);
        for (int k = 2; k <= d.b + 1; ++k) {
            const Vec term = vec_mat(vec_mat(ss.pi1, rp), lb.down(k));
            for (int j = 0; j < d.n0; ++j) eq1[j] += term[j];
            rp = rp * rm.r;
        }
        CHECK(inf_norm(eq1) <= 1e-10);

        // pi0 B0 + pi1 (A1 + R^b A_{b+1}) = 0
        Vec eq2 = vec_mat(ss.pi0, lb.b0);
        const Vec t2 = vec_mat(ss.pi1, lb.a1 + mat_pow(rm.r, static_cast<unsigned>(d.b)) * lb.ab1);
        for (int j = 0; j < d.n; ++j) eq2[j] += t2[j];
        CHECK(inf_norm(eq2) <= 1e-10);

        // Normalization re-verified.
        CHECK(std::abs(vec_sum(ss.pi0) + dot(ss.pi1, ss.tail_weight) - 1.0) <= 1e-12);
        for (double v : ss.pi0) CHECK(v >= 0.0);
        for (double v : ss.pi1) CHECK(v >= 0.0);
    }
}

TEST_CASE("stationary levels: identity, associativity, geometric tail sum") {
    const LevelBlocks lb = build_level_blocks(fixtures::fixture_b2());
    const SteadyState ss = solve_boundary(lb, compute_rate_matrix(lb));

    const Vec pi1 = stationary_level(ss, 1);
    for (size_t i = 0; i < pi1.size(); ++i) CHECK(pi1[i] == ss.pi1[i]);

    const Vec pi3 = stationary_level(ss, 3);
    const Vec alt = vec_mat(vec_mat(ss.pi1, ss.rate.r), ss.rate.r);
    for (size_t i = 0; i < pi3.size(); ++i) CHECK(pi3[i] == doctest::Approx(alt[i]).epsilon(1e-14));

    // Partial sums of pi_k e converge to pi1 (I-R)^{-1} e.
    double partial = 0.0;
    Vec v = ss.pi1;
    for (int k = 1; k <= 400; ++k) {
        partial += vec_sum(v);
        v = vec_mat(v, ss.rate.r);
    }
    CHECK(std::abs(partial - dot(ss.pi1, ss.tail_weight)) < 1e-10);
}

TEST_CASE("closed-form means match partial sums") {
    for (const auto& model : {fixtures::fixture_b2(), fixtures::fixture_map_ph()}) {
        const LevelBlocks lb = build_level_blocks(model);
        const SteadyState ss = solve_boundary(lb, compute_rate_matrix(lb));
        const LevelDims& d = lb.dims;

        double n1_sum = 0.0, n2_sum = 0.0;
        for (int l = 1; l <= d.b; ++l)
            for (int i = 0; i < d.bnd_stage_width(l); ++i)
                n2_sum += l * ss.pi0[d.bnd_stage_offset(l) + i];
        Vec v = ss.pi1;
        for (int k = 1; k <= 500; ++k) {
            n1_sum += k * vec_sum(v);
            for (int l = 1; l <= d.b; ++l)
                for (int i = 0; i < d.rep_stage_width(l); ++i)
                    n2_sum += l * v[d.rep_stage_offset(l) + i];
            v = vec_mat(v, ss.rate.r);
        }
        CHECK(std::abs(mean_waiting_count(ss) - n1_sum) < 1e-8);
        CHECK(std::abs(mean_block_count(ss) - n2_sum) < 1e-8);
        CHECK(mean_block_count(ss) <= d.b);
        CHECK(mean_waiting_count(ss) >= 0.0);
    }
}

TEST_CASE("light traffic: waiting room is almost surely empty") {
    const LevelBlocks lb = build_level_blocks(fixtures::exp_model(1e-6, 1.0, 2.0, 2));
    const SteadyState ss = solve_boundary(lb, compute_rate_matrix(lb));
    CHECK(mean_waiting_count(ss) < 1e-4);
}

TEST_CASE("E[N1] decreases as the building rate grows") {
    double prev = 1e300;
    for (double mu1 : {0.2, 0.4, 0.8, 1.2}) {
        const LevelBlocks lb = build_level_blocks(fixtures::exp_model(0.3, mu1, 2.0, 40));
        const SteadyState ss = solve_boundary(lb, compute_rate_matrix(lb));
        const double n1 = mean_waiting_count(ss);
        CHECK(n1 < prev);
        prev = n1;
    }
}

TEST_CASE("E[N2] increases with the block cap") {
    double prev = -1.0;
    for (int b : {1, 2, 4, 8}) {
        const LevelBlocks lb = build_level_blocks(fixtures::exp_model(0.5, 1.0, 2.0, b));
        const SteadyState ss = solve_boundary(lb, compute_rate_matrix(lb));
        const double n2 = mean_block_count(ss);
        CHECK(n2 >= prev);
        prev = n2;
    }
}

TEST_CASE("E[N1] grows strictly with the arrival rate") {
    double prev = -1.0;
    for (double lambda : {0.1, 0.3, 0.6, 0.9, 1.2}) {
        const LevelBlocks lb = build_level_blocks(fixtures::exp_model(lambda, 1.0, 2.0, 5));
        const SteadyState ss = solve_boundary(lb, compute_rate_matrix(lb));
        const double n1 = mean_waiting_count(ss);
        CHECK(n1 > prev);
        prev = n1;
    }
}

TEST_CASE("matgeo agrees with the truncated-chain stationary vector") {
    const LevelBlocks lb = build_level_blocks(fixtures::fixture_b2());
    const SteadyState ss = solve_boundary(lb, compute_rate_matrix(lb));
    const int levels = 60;
    const Vec x = ctmc_stationary(build_truncated_q(lb, levels));
    const LevelDims& d = lb.dims;

    for (int i = 0; i < d.n0; ++i) CHECK(std::abs(x[i] - ss.pi0[i]) < 1e-8);
    Vec v = ss.pi1;
    for (int k = 1; k <= 40; ++k) {
        for (int i = 0; i < d.n; ++i)
            CHECK(std::abs(x[d.n0 + (k - 1) * d.n + i] - v[i]) < 1e-8);
        v = vec_mat(v, ss.rate.r);
    }
}

TEST_CASE("restricted matgeo vector balances the truncated generator") {
    const LevelBlocks lb = build_level_blocks(fixtures::fixture_map_ph());
    const SteadyState ss = solve_boundary(lb, compute_rate_matrix(lb));
    const int levels = 60;
    const Matrix q = build_truncated_q(lb, levels);
    Vec pi(static_cast<size_t>(q.rows), 0.0);
    for (int i = 0; i < lb.dims.n0; ++i) pi[i] = ss.pi0[i];
    Vec v = ss.pi1;
    double mass = vec_sum(ss.pi0);
    for (int k = 1; k <= levels; ++k) {
        for (int i = 0; i < lb.dims.n; ++i) pi[lb.dims.n0 + (k - 1) * lb.dims.n + i] = v[i];
        mass += vec_sum(v);
        v = vec_mat(v, ss.rate.r);
    }
    for (double& p : pi) p /= mass;
    CHECK(inf_norm(vec_mat(pi, q)) <= 1e-8);
}
