#include <doctest.h>

#include <cmath>

#include "blockqueue/confirmation.hpp"
#include "blockqueue/simulator.hpp"
#include "test_fixtures.hpp"

using namespace blockqueue;

namespace {

SteadyState solve_fixture(const ModelSpec& model) {
    const LevelBlocks lb = build_level_blocks(model);
    return solve_boundary(lb, compute_rate_matrix(lb));
}

} // namespace

TEST_CASE("absorbing chain rows balance against the absorption vector") {
    for (const auto policy : {SurplusPolicy::Absorb, SurplusPolicy::Reflect}) {
        const AbsorbingChain chain = build_absorbing_chain(fixtures::fixture_b2(), 12, policy);
        const Matrix h = chain.dense();
        const Vec h0 = chain.absorption();
        const Vec rs = row_sums(h);
        for (int i = 0; i < h.rows; ++i) {
            CHECK(std::abs(rs[i] + h0[i]) < 1e-12);
            CHECK(h0[i] >= 0.0);
        }
    }
}

TEST_CASE("absorption factors follow the b/k law by level") {
    const auto model = fixtures::fixture_map_ph();
    const int b = model.block_cap;
    const AbsorbingChain chain = build_absorbing_chain(model, 14);
    const Vec h0 = chain.absorption();
    const LevelDims& d = chain.dims;
    // Building-stage absorption at level k carries T0 scaled by 1 (k <= b)
    // or b/k (k > b); compare stage-1 entries against the building exit rates.
    const PhaseType& bld = model.building;
    for (int k = 1; k <= 10; ++k) {
        const double factor = k <= b ? 1.0 : static_cast<double>(b) / k;
        const int off = chain.level_offset(k) + d.rep_stage_offset(1);
        for (int i = 0; i < d.m0; ++i)
            for (int j = 0; j < d.m1; ++j)
                CHECK(h0[off + i * d.m1 + j] == doctest::Approx(factor * bld.exit()[j]).epsilon(1e-12));
    }
    // Generation stages never absorb.
    for (int k = 1; k <= chain.levels - 1; ++k)
        for (int i = 0; i < d.rep_stage_width(0); ++i)
            CHECK(h0[chain.level_offset(k) + i] == 0.0);
}

TEST_CASE("absorbing chain rejects too-small truncations") {
    CHECK_THROWS_AS(build_absorbing_chain(fixtures::fixture_b2(), 5), ValidationError);
}

TEST_CASE("initial vectors: normalization, split, and degenerate rejection") {
    const auto model = fixtures::fixture_b2();
    const SteadyState ss = solve_fixture(model);
    const AbsorbingChain chain = build_absorbing_chain(model, 60);
    const InitialVectors iv = initial_vectors(ss, chain);

    CHECK(std::abs(iv.gamma_mass - 1.0) < 1e-8); // truncated tail is negligible at K=60
    CHECK(std::abs(vec_sum(iv.phi) + vec_sum(iv.psi) - iv.gamma_mass) < 1e-14);
    for (double v : iv.gamma) CHECK(v >= 0.0);
    for (double v : iv.psi) CHECK(v >= 0.0);
    for (int i = 0; i < chain.tilde_n0; ++i) CHECK(iv.gamma[i] == 0.0);

    SteadyState degenerate = ss;
    degenerate.pi0.assign(degenerate.pi0.size(), 0.0);
    degenerate.pi0[0] = 1.0;
    degenerate.pi1.assign(degenerate.pi1.size(), 0.0);
    CHECK_THROWS_AS(initial_vectors(degenerate, chain), ValidationError);
}

TEST_CASE("phi mass matches the fraction of arrivals that find generation running") {
    SimConfig cfg;
    cfg.horizon_events = 400000;
    cfg.replications = 10;
    cfg.seed = 1234;

    // Poisson arrivals see time averages, so the match is exact up to noise.
    {
        const auto model = fixtures::fixture_b2();
        const SteadyState ss = solve_fixture(model);
        const InitialVectors iv = initial_vectors(ss, build_absorbing_chain(model, 120));
        const SimEstimates est = simulate_tagged(model, cfg);
        CHECK(std::abs(iv.phi_mass - est.frac_seen_generation) <
              3.0 * std::max(est.se_frac_seen_generation, 1e-4));
    }
    // MAP arrivals tilt what they see by their own transition rates; the
    // conditional-stationary phi mass is only an approximation there.
    {
        const auto model = fixtures::fixture_map_ph();
        const SteadyState ss = solve_fixture(model);
        const InitialVectors iv = initial_vectors(ss, build_absorbing_chain(model, 120));
        const SimEstimates est = simulate_tagged(model, cfg);
        CHECK(std::abs(iv.phi_mass - est.frac_seen_generation) < 0.01);
    }
}

TEST_CASE("mean first passage: zero initial vector and dimension checks") {
    const auto model = fixtures::fixture_b2();
    const AbsorbingChain chain = build_absorbing_chain(model, 10);
    CHECK(mean_first_passage(chain, Vec(static_cast<size_t>(chain.size()), 0.0)) == 0.0);
    CHECK_THROWS_AS(mean_first_passage(chain, Vec(3, 0.1)), ValidationError);
}

TEST_CASE("mean first passage: lone transaction in light traffic") {
    // One waiter, generation running: finish generation, then build its
    // block; arrivals are negligible at lambda = 1e-8.
    const auto model = fixtures::exp_model(1e-8, 1.0, 2.0, 1);
    const AbsorbingChain chain = build_absorbing_chain(model, 50);
    Vec init(static_cast<size_t>(chain.size()), 0.0);
    init[static_cast<size_t>(chain.level_offset(1))] = 1.0;
    CHECK(mean_first_passage(chain, init) == doctest::Approx(0.5 + 1.0).epsilon(1e-5));
}

TEST_CASE("variance of single-stage and Erlang-2 absorption") {
    // Point mass on a tagged-in-block state isolates the building time:
    // exponential gives 1/mu^2, Erlang-2 gives 2/mu^2.
    {
        const auto model = fixtures::exp_model(1e-9, 2.5, 2.0, 1);
        const AbsorbingChain chain = build_absorbing_chain(model, 50);
        Vec init(static_cast<size_t>(chain.size()), 0.0);
        init[static_cast<size_t>(chain.dims.m0 * chain.dims.m1)] = 1.0; // level-0 stage 1
        CHECK(mean_first_passage(chain, init) == doctest::Approx(0.4).epsilon(1e-6));
        CHECK(variance_first_passage(chain, init) == doctest::Approx(0.16).epsilon(1e-5));
    }
    {
        const double mu = 3.0;
        const ModelSpec model(fixtures::poisson(1e-9), fixtures::erlang2(mu),
                              fixtures::exponential_ph(2.0), 1);
        const AbsorbingChain chain = build_absorbing_chain(model, 50);
        Vec init(static_cast<size_t>(chain.size()), 0.0);
        init[static_cast<size_t>(chain.dims.m0 * chain.dims.m1)] = 1.0; // first phase of Erlang block
        CHECK(mean_first_passage(chain, init) == doctest::Approx(2.0 / mu).epsilon(1e-6));
        CHECK(variance_first_passage(chain, init) == doctest::Approx(2.0 / (mu * mu)).epsilon(1e-5));
    }
}

TEST_CASE("report's phi moments agree with the full absorbing chain") {
    for (const auto& model : {fixtures::fixture_b2(), fixtures::fixture_map_ph()}) {
        const SteadyState ss = solve_fixture(model);
        const ConfirmationReport rep = mean_confirmation_time(model, ss);
        const AbsorbingChain chain = build_absorbing_chain(model, rep.truncation_levels);
        const InitialVectors iv = initial_vectors(ss, chain);
        const double full = mean_first_passage(chain, iv.phi);
        CHECK(rep.mean_first_passage == doctest::Approx(full).epsilon(1e-9));
        CHECK(rep.phi_mass == doctest::Approx(iv.phi_mass).epsilon(1e-12));
        const double var_full = variance_first_passage(chain, iv.phi);
        CHECK(rep.var_first_passage == doctest::Approx(var_full).epsilon(1e-8));
    }
}

TEST_CASE("tagged chain: in-block time reduces to the building mean") {
    const auto model = fixtures::fixture_b2();
    const TaggedPassageTimes times = tagged_passage_times(model, 60);
    REQUIRE(times.in_block.size() == 1);
    CHECK(times.in_block[0] == doctest::Approx(1.0).epsilon(1e-12)); // 1/mu1
}

TEST_CASE("confirmation report matches tagged simulation") {
    for (const auto& model : {fixtures::fixture_b2(), fixtures::fixture_map_ph()}) {
        const SteadyState ss = solve_fixture(model);
        const ConfirmationReport rep = mean_confirmation_time(model, ss);
        SimConfig cfg;
        cfg.horizon_events = 500000;
        cfg.replications = 12;
        cfg.seed = 77;
        const SimEstimates est = simulate_tagged(model, cfg);
        CHECK(std::abs(rep.mean_confirmation - est.mean_sojourn) < 4.0 * est.se_sojourn);
        CHECK(rep.truncation_error < 0.01 * rep.mean_confirmation);
        CHECK(rep.mean_confirmation >= rep.mean_first_passage);
        CHECK(rep.mean_confirmation > 0.0);
    }
}

TEST_CASE("passage means rise with the arrival rate") {
    double prev = 0.0, prev_xi = 0.0;
    for (double lambda : {0.1, 0.3, 0.5, 0.7}) {
        const auto model = fixtures::exp_model(lambda, 1.0, 2.0, 2);
        const SteadyState ss = solve_fixture(model);
        const ConfirmationReport rep = mean_confirmation_time(model, ss);
        CHECK(rep.mean_confirmation > prev);
        CHECK(rep.mean_first_passage > 0.0);
        CHECK(rep.mean_first_passage / rep.phi_mass > prev_xi);
        prev = rep.mean_confirmation;
        prev_xi = rep.mean_first_passage / rep.phi_mass;
    }
}

TEST_CASE("rg factorization reconstructs the absorbing chain") {
    const AbsorbingChain chain = build_absorbing_chain(fixtures::fixture_b2(), 40);
    const RgFactors f = rg_factorize(chain);
    const Matrix h = chain.dense();
    const Matrix rebuilt = rg_reconstruct(chain, f);
    CHECK(inf_norm(h - rebuilt) <= 1e-8);

    // Every censored diagonal block keeps a negative diagonal.
    for (const Matrix& u : f.u)
        for (int i = 0; i < u.rows; ++i) CHECK(u(i, i) < 0.0);
}

TEST_CASE("top-level factors match the hand block elimination") {
    // Censoring only the last level: R_{K-1} = A0 (-U_K)^{-1} with
    // U_K the last diagonal block.
    const AbsorbingChain chain = build_absorbing_chain(fixtures::fixture_b2(), 12);
    const RgFactors f = rg_factorize(chain);
    const int k = chain.levels;
    const int b = chain.dims.b;
    const Matrix expect_r = chain.a0 * inverse(scale(chain.diag_block(k), -1.0));
    CHECK(inf_norm(f.r[static_cast<size_t>(k - 1)] - expect_r) < 1e-12);
    CHECK(inf_norm(f.u[static_cast<size_t>(k)] - chain.diag_block(k)) == 0.0);
    // An up-excursion needs b rate factors before A_{b+1} drops back, so the
    // first corrected diagonal block sits b levels below the top.
    CHECK(inf_norm(f.u[static_cast<size_t>(k - 1)] - chain.diag_block(k - 1)) < 1e-12);
    Matrix path = Matrix::identity(chain.dims.n);
    for (int j = k - b; j <= k - 1; ++j) path = path * f.r[static_cast<size_t>(j)];
    const Matrix expect_u = chain.diag_block(k - b) + path * chain.ab1;
    CHECK(inf_norm(f.u[static_cast<size_t>(k - b)] - expect_u) < 1e-12);
}

TEST_CASE("factorized solve equals the direct solve") {
    for (const auto& model : {fixtures::fixture_b2(), fixtures::fixture_map_ph()}) {
        const AbsorbingChain chain = build_absorbing_chain(model, 40);
        const RgFactors f = rg_factorize(chain);
        const Vec direct = chain.solve_neg_e();
        const Vec via_factors = rg_solve(chain, f, Vec(static_cast<size_t>(chain.size()), -1.0));
        for (size_t i = 0; i < direct.size(); ++i)
            CHECK(std::abs(direct[i] - via_factors[i]) <= 1e-8 * std::max(1.0, std::abs(direct[i])));
    }
}
