#include "blockqueue/confirmation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "blockqueue/generator.hpp"

namespace blockqueue {

namespace {

Matrix outer(const Vec& col, const Vec& row) {
    Matrix m(static_cast<int>(col.size()), static_cast<int>(row.size()));
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) m(i, j) = col[i] * row[j];
    return m;
}

void place(Matrix& dst, int row0, int col0, const Matrix& src, double factor = 1.0) {
    for (int i = 0; i < src.rows; ++i)
        for (int j = 0; j < src.cols; ++j) dst(row0 + i, col0 + j) += factor * src(i, j);
}

void place_banded(BandedMatrix& dst, int row0, int col0, const Matrix& src, double factor = 1.0) {
    for (int i = 0; i < src.rows; ++i)
        for (int j = 0; j < src.cols; ++j) {
            const double v = factor * src(i, j);
            if (v != 0.0) dst.add(row0 + i, col0 + j, v);
        }
}

} // namespace

Matrix AbsorbingChain::diag_block(int k) const {
    const int b = dims.b;
    Matrix m = k == 0 ? b1_tilde : a1_tilde;
    if (k > b) {
        // Building completion restarts generation here with probability
        // (k-b)/k; the complementary b/k goes to absorption.
        const double keep = static_cast<double>(k - b) / k;
        for (int l = 1; l <= b; ++l)
            place(m, dims.rep_stage_offset(l), 0, t0_beta, keep);
    }
    if (k == levels && policy == SurplusPolicy::Reflect) {
        const Vec surplus = row_sums(k == 0 ? b0_tilde : a0);
        for (int i = 0; i < m.rows; ++i) m(i, i) += surplus[i];
    }
    return m;
}

Matrix AbsorbingChain::down_tilde(int k) const {
    const int b = dims.b;
    if (k < 2 || k > b + 1) throw ValidationError("AbsorbingChain::down_tilde: k must lie in [2, b+1]");
    Matrix m(dims.n, tilde_n0);
    const int w = dims.m0 * dims.m1;
    place(m, 0, (k - 1) * w, s0_alpha);
    return m;
}

AbsorbingChain build_absorbing_chain(const ModelSpec& model, int levels, SurplusPolicy policy) {
    const int b = model.block_cap;
    if (levels < 2 * b + 2)
        throw ValidationError("build_absorbing_chain: need at least 2b+2 levels, got " + std::to_string(levels));

    const LevelBlocks lb = build_level_blocks(model);
    AbsorbingChain chain;
    chain.dims = lb.dims;
    chain.levels = levels;
    chain.policy = policy;
    chain.a0 = lb.a0;
    chain.ab1 = lb.ab1;
    chain.s0_alpha = lb.s0_alpha;
    chain.t0_beta = lb.t0_beta;

    const LevelDims& d = chain.dims;
    const int m0 = d.m0, m1 = d.m1;
    const int w = m0 * m1;
    chain.tilde_n0 = (b + 1) * w;

    // Within-level block for levels 1..b: like A1 but without the generation
    // restart (building completion leaves for absorption instead).
    chain.a1_tilde = Matrix(d.n, d.n);
    place(chain.a1_tilde, 0, 0, kron_sum(model.arrivals.c(), model.generation.t()));
    const Matrix c_plus_t = kron_sum(model.arrivals.c(), model.building.t());
    for (int l = 1; l <= b; ++l)
        place(chain.a1_tilde, d.rep_stage_offset(l), d.rep_stage_offset(l), c_plus_t);

    // Level 0: the tagged block is being built; stage l >= 1 holds a block of
    // size l. Stage 0 is an unreachable filler kept so every level shares
    // the same stage grid.
    chain.b1_tilde = Matrix(chain.tilde_n0, chain.tilde_n0);
    place(chain.b1_tilde, 0, 0, kron_product(model.arrivals.c(), Matrix::identity(m1)));
    for (int l = 1; l <= b; ++l) place(chain.b1_tilde, l * w, l * w, c_plus_t);

    // Arrivals at level 0 leave the tagged block untouched; they only deepen
    // the waiting room, which re-enters the level structure at level 1.
    chain.b0_tilde = Matrix(chain.tilde_n0, d.n);
    const Matrix d_im1 = kron_product(model.arrivals.d(), Matrix::identity(m1));
    place(chain.b0_tilde, 0, d.rep_stage_offset(1), d_im1);
    for (int l = 1; l <= b; ++l) place(chain.b0_tilde, l * w, d.rep_stage_offset(l), d_im1);

    return chain;
}

Matrix AbsorbingChain::dense() const {
    const int b = dims.b;
    const int total = size();
    Matrix h(total, total);
    place(h, 0, 0, diag_block(0));
    if (levels >= 1) place(h, 0, level_offset(1), b0_tilde);
    for (int k = 1; k <= levels; ++k) {
        const int row = level_offset(k);
        place(h, row, row, diag_block(k));
        if (k < levels) place(h, row, level_offset(k + 1), a0);
        if (k <= b)
            place(h, row, 0, down_tilde(k + 1));
        else
            place(h, row, level_offset(k - b), ab1);
    }
    return h;
}

Vec AbsorbingChain::absorption() const {
    const int b = dims.b;
    Vec h0(static_cast<size_t>(size()), 0.0);
    // e (x) T0 from every building stage, scaled by b/k beyond level b.
    Vec exit_bld(static_cast<size_t>(dims.m0 * dims.m1), 0.0);
    {
        const Vec& t0 = /* building exit rates */ row_sums(t0_beta); // (T0 beta) e = T0
        for (size_t i = 0; i < exit_bld.size(); ++i) exit_bld[i] = t0[i];
    }
    const int w = dims.m0 * dims.m1;
    for (int l = 1; l <= b; ++l)
        for (int i = 0; i < w; ++i) h0[static_cast<size_t>(l * w + i)] = exit_bld[i];
    for (int k = 1; k <= levels; ++k) {
        const double factor = k <= b ? 1.0 : static_cast<double>(b) / k;
        for (int l = 1; l <= b; ++l) {
            const int off = level_offset(k) + dims.rep_stage_offset(l);
            for (int i = 0; i < w; ++i) h0[static_cast<size_t>(off + i)] += factor * exit_bld[i];
        }
    }
    if (policy == SurplusPolicy::Absorb) {
        // The dropped arrival block of the last level feeds absorption.
        const Vec s_rep = row_sums(a0);
        const Vec s_bnd = row_sums(b0_tilde);
        if (levels == 0) {
            for (int i = 0; i < tilde_n0; ++i) h0[static_cast<size_t>(i)] += s_bnd[i];
        } else {
            const int off = level_offset(levels);
            for (int i = 0; i < dims.n; ++i) h0[static_cast<size_t>(off + i)] += s_rep[i];
        }
    }
    return h0;
}

BandedMatrix AbsorbingChain::banded() const {
    const int b = dims.b;
    const int total = size();
    const int kl = b * dims.n + tilde_n0 + dims.n;
    const int ku = tilde_n0 + 2 * dims.n;
    BandedMatrix h(total, std::min(kl, total - 1), std::min(ku, total - 1));
    place_banded(h, 0, 0, diag_block(0));
    if (levels >= 1) place_banded(h, 0, level_offset(1), b0_tilde);
    for (int k = 1; k <= levels; ++k) {
        const int row = level_offset(k);
        place_banded(h, row, row, diag_block(k));
        if (k < levels) place_banded(h, row, level_offset(k + 1), a0);
        if (k <= b)
            place_banded(h, row, 0, down_tilde(k + 1));
        else
            place_banded(h, row, level_offset(k - b), ab1);
    }
    return h;
}

Vec AbsorbingChain::solve_neg_e() const {
    BandedMatrix h = banded();
    h.factor();
    return h.solve(Vec(static_cast<size_t>(size()), -1.0));
}

InitialVectors initial_vectors(const SteadyState& ss, const AbsorbingChain& chain) {
    const LevelDims& d = chain.dims;
    const double p0 = vec_sum(ss.pi0);
    const double busy = 1.0 - p0;
    if (busy <= 1e-12)
        throw ValidationError("initial_vectors: the system is empty with probability one");

    InitialVectors iv;
    iv.levels = chain.levels;
    iv.gamma.assign(static_cast<size_t>(chain.size()), 0.0);
    iv.phi.assign(static_cast<size_t>(chain.size()), 0.0);

    Vec level = ss.pi1;
    for (int k = 1; k <= chain.levels; ++k) {
        const int off = chain.level_offset(k);
        for (int i = 0; i < d.n; ++i) iv.gamma[static_cast<size_t>(off + i)] = level[i] / busy;
        for (int i = 0; i < d.rep_stage_width(0); ++i)
            iv.phi[static_cast<size_t>(off + i)] = level[i] / busy;
        level = vec_mat(level, ss.rate.r);
    }
    iv.gamma_mass = vec_sum(iv.gamma);
    iv.phi_mass = vec_sum(iv.phi);
    iv.psi = iv.gamma;
    for (size_t i = 0; i < iv.psi.size(); ++i) iv.psi[i] -= iv.phi[i];
    return iv;
}

double mean_first_passage(const AbsorbingChain& chain, const Vec& init) {
    if (static_cast<int>(init.size()) != chain.size())
        throw ValidationError("mean_first_passage: initial vector length mismatch");
    double mass = 0.0;
    for (double v : init) {
        if (v < 0.0) throw ValidationError("mean_first_passage: initial vector must be nonnegative");
        mass += v;
    }
    if (mass > 1.0 + 1e-9) throw ValidationError("mean_first_passage: initial mass exceeds one");
    if (mass == 0.0) return 0.0;
    const Vec x = chain.solve_neg_e(); // x = -H^{-1} e >= 0
    return dot(init, x);
}

double variance_first_passage(const AbsorbingChain& chain, const Vec& init) {
    if (static_cast<int>(init.size()) != chain.size())
        throw ValidationError("variance_first_passage: initial vector length mismatch");
    // Factor once, reuse for both moments.
    BandedMatrix h = chain.banded();
    h.factor();
    const Vec x = h.solve(Vec(static_cast<size_t>(chain.size()), -1.0)); // -H^{-1} e
    Vec y = x;
    for (double& v : y) v = -v;
    y = h.solve(std::move(y)); // H^{-2} e
    const double first = dot(init, x);
    const double second = 2.0 * dot(init, y);
    return second - first * first;
}

namespace {

// Exact collapsed copy of the chain for the first-passage solves: within a
// level every building stage has the same dynamics and the same absorption
// split, so stages 1..b lump into one; likewise level 0 lumps to a single
// building block. Keeps large block caps affordable.
struct LumpedChain {
    int m0, m1, m2, b, levels;
    int wm, wb; // generation / building widths
    SurplusPolicy policy;
    Matrix c_plus_s, c_plus_t, d_im1, d_im2, s0a, t0b;

    int size() const { return wb + levels * (wm + wb); }
    int mine_off(int k) const { return wb + (k - 1) * (wm + wb); }
    int build_off(int k) const { return k == 0 ? 0 : mine_off(k) + wm; }

    BandedMatrix assemble() const {
        const int total = size();
        const int lvl = wm + wb;
        const int kl = std::min((b + 1) * lvl + wb, total - 1);
        const int ku = std::min(2 * lvl, total - 1);
        BandedMatrix h(total, kl, ku);
        const Vec d1 = row_sums(d_im1);
        const Vec d2 = row_sums(d_im2);

        place_banded(h, 0, 0, c_plus_t);
        if (levels >= 1) place_banded(h, 0, build_off(1), d_im1);
        else for (int i = 0; i < wb; ++i) if (policy == SurplusPolicy::Reflect) h.add(i, i, d1[i]);

        for (int k = 1; k <= levels; ++k) {
            place_banded(h, mine_off(k), mine_off(k), c_plus_s);
            place_banded(h, build_off(k), build_off(k), c_plus_t);
            if (k < levels) {
                place_banded(h, mine_off(k), mine_off(k + 1), d_im2);
                place_banded(h, build_off(k), build_off(k + 1), d_im1);
            } else if (policy == SurplusPolicy::Reflect) {
                for (int i = 0; i < wm; ++i) h.add(mine_off(k) + i, mine_off(k) + i, d2[i]);
                for (int i = 0; i < wb; ++i) h.add(build_off(k) + i, build_off(k) + i, d1[i]);
            }
            if (k <= b)
                place_banded(h, mine_off(k), 0, s0a);
            else
                place_banded(h, mine_off(k), build_off(k - b), s0a);
            if (k > b)
                place_banded(h, build_off(k), mine_off(k), t0b, static_cast<double>(k - b) / k);
        }
        return h;
    }
};

LumpedChain make_lumped(const ModelSpec& model, int levels, SurplusPolicy policy) {
    LumpedChain lc;
    lc.m0 = model.m0();
    lc.m1 = model.m1();
    lc.m2 = model.m2();
    lc.b = model.block_cap;
    lc.levels = levels;
    lc.wm = lc.m0 * lc.m2;
    lc.wb = lc.m0 * lc.m1;
    lc.policy = policy;
    lc.c_plus_s = kron_sum(model.arrivals.c(), model.generation.t());
    lc.c_plus_t = kron_sum(model.arrivals.c(), model.building.t());
    lc.d_im1 = kron_product(model.arrivals.d(), Matrix::identity(lc.m1));
    lc.d_im2 = kron_product(model.arrivals.d(), Matrix::identity(lc.m2));
    lc.s0a = kron_product(Matrix::identity(lc.m0), outer(model.generation.exit(), model.building.alpha()));
    lc.t0b = kron_product(Matrix::identity(lc.m0), outer(model.building.exit(), model.generation.alpha()));
    return lc;
}

struct LumpedMoments {
    double mean = 0.0;
    double second = 0.0;
    double phi_mass = 0.0;
};

LumpedMoments lumped_phi_moments(const ModelSpec& model, const SteadyState& ss, int levels,
                                 SurplusPolicy policy) {
    const LumpedChain lc = make_lumped(model, levels, policy);
    BandedMatrix h = lc.assemble();
    h.factor();
    const Vec x = h.solve(Vec(static_cast<size_t>(lc.size()), -1.0));
    Vec y = x;
    for (double& v : y) v = -v;
    y = h.solve(std::move(y));

    const double busy = 1.0 - vec_sum(ss.pi0);
    if (busy <= 1e-12)
        throw ValidationError("mean_confirmation_time: the system is empty with probability one");
    LumpedMoments out;
    Vec level = ss.pi1;
    for (int k = 1; k <= levels; ++k) {
        const int off = lc.mine_off(k);
        for (int i = 0; i < lc.wm; ++i) {
            const double p = level[i] / busy;
            out.phi_mass += p;
            out.mean += p * x[static_cast<size_t>(off + i)];
            out.second += 2.0 * p * y[static_cast<size_t>(off + i)];
        }
        level = vec_mat(level, ss.rate.r);
    }
    return out;
}

} // namespace

TaggedPassageTimes tagged_passage_times(const ModelSpec& model, int levels, SurplusPolicy policy) {
    const int m0 = model.m0(), m1 = model.m1(), m2 = model.m2(), b = model.block_cap;
    TaggedPassageTimes out;
    out.levels = levels;
    out.wm = m0 * m2;
    out.wb = m0 * m1;
    const int n = out.wm + out.wb;

    // Once the tagged transaction sits in the block, only the building phase
    // and the environment evolve; the waiting room no longer matters.
    const Matrix cd_plus_t = kron_sum(model.arrivals.c() + model.arrivals.d(), model.building.t());
    out.in_block = solve_linear(cd_plus_t, Vec(static_cast<size_t>(out.wb), -1.0));

    const Matrix c_plus_s = kron_sum(model.arrivals.c(), model.generation.t());
    const Matrix c_plus_t = kron_sum(model.arrivals.c(), model.building.t());
    const Matrix d_im1 = kron_product(model.arrivals.d(), Matrix::identity(m1));
    const Matrix d_im2 = kron_product(model.arrivals.d(), Matrix::identity(m2));
    const Matrix s0a = kron_product(Matrix::identity(m0), outer(model.generation.exit(), model.building.alpha()));
    const Matrix t0b = kron_product(Matrix::identity(m0), outer(model.building.exit(), model.generation.alpha()));
    const Vec drafted = mat_vec(s0a, out.in_block); // selection feeds the in-block law
    const Vec d1 = row_sums(d_im1);
    const Vec d2 = row_sums(d_im2);

    const int total = levels * n;
    auto lvl = [&](int k) { return (k - 1) * n; };
    const int kl = std::min(total - 1, (b + 1) * n);
    const int ku = std::min(total - 1, 2 * n);
    BandedMatrix h(total, kl, ku);
    Vec rhs(static_cast<size_t>(total), -1.0);
    for (int k = 1; k <= levels; ++k) {
        const int r = lvl(k);
        place_banded(h, r, r, c_plus_s);
        place_banded(h, r + out.wm, r + out.wm, c_plus_t);
        place_banded(h, r + out.wm, r, t0b); // pegging another block frees the server
        if (k < levels) {
            place_banded(h, r, lvl(k + 1), d_im2);
            place_banded(h, r + out.wm, lvl(k + 1) + out.wm, d_im1);
        } else if (policy == SurplusPolicy::Reflect) {
            for (int i = 0; i < out.wm; ++i) h.add(r + i, r + i, d2[i]);
            for (int i = 0; i < out.wb; ++i) h.add(r + out.wm + i, r + out.wm + i, d1[i]);
        }
        const double sel = k <= b ? 1.0 : static_cast<double>(b) / k;
        for (int i = 0; i < out.wm; ++i) rhs[static_cast<size_t>(r + i)] -= sel * drafted[i];
        if (k > b) place_banded(h, r, lvl(k - b) + out.wm, s0a, static_cast<double>(k - b) / k);
    }
    h.factor();
    const Vec x = h.solve(std::move(rhs));

    out.per_level.resize(static_cast<size_t>(levels));
    for (int k = 1; k <= levels; ++k)
        out.per_level[static_cast<size_t>(k - 1)].assign(x.begin() + lvl(k), x.begin() + lvl(k) + n);
    return out;
}

double palm_mean_confirmation(const ModelSpec& model, const SteadyState& ss,
                              const TaggedPassageTimes& times) {
    const LevelDims& d = ss.dims;
    const int m0 = d.m0, m1 = d.m1, m2 = d.m2;
    const Matrix& dm = model.arrivals.d();
    const double lambda = map_arrival_rate(model.arrivals);

    // Palm weight of a pre-arrival state (phase i) jumping to phase i2 is
    // pi * D(i,i2) / lambda; the arrival joins the waiting room, so level j
    // is read at level j+1 of the tagged chain.
    double mean = 0.0;
    auto read = [&](int post_level, int i2, bool mining, int ph) {
        const Vec& x = times.per_level[static_cast<size_t>(post_level - 1)];
        return mining ? x[static_cast<size_t>(i2 * m2 + ph)]
                      : x[static_cast<size_t>(times.wm + i2 * m1 + ph)];
    };

    // Level 0: idle states start a fresh generation phase; level-0 building
    // states carry their current phase.
    for (int i = 0; i < m0; ++i)
        for (int i2 = 0; i2 < m0; ++i2) {
            if (dm(i, i2) == 0.0) continue;
            const double w = ss.pi0[i] * dm(i, i2) / lambda;
            for (int r = 0; r < m2; ++r)
                mean += w * model.generation.alpha()[r] * read(1, i2, true, r);
        }
    for (int l = 1; l <= d.b; ++l)
        for (int i = 0; i < m0; ++i)
            for (int j = 0; j < m1; ++j)
                for (int i2 = 0; i2 < m0; ++i2) {
                    if (dm(i, i2) == 0.0) continue;
                    const double w = ss.pi0[d.bnd_stage_offset(l) + i * m1 + j] * dm(i, i2) / lambda;
                    mean += w * read(1, i2, false, j);
                }
    Vec level = ss.pi1;
    for (int k = 1; k < times.levels; ++k) {
        for (int i = 0; i < m0; ++i)
            for (int i2 = 0; i2 < m0; ++i2) {
                if (dm(i, i2) == 0.0) continue;
                const double tilt = dm(i, i2) / lambda;
                for (int r = 0; r < m2; ++r)
                    mean += level[i * m2 + r] * tilt * read(k + 1, i2, true, r);
                for (int l = 1; l <= d.b; ++l)
                    for (int j = 0; j < m1; ++j)
                        mean += level[d.rep_stage_offset(l) + i * m1 + j] * tilt * read(k + 1, i2, false, j);
            }
        level = vec_mat(level, ss.rate.r);
    }
    return mean;
}

ConfirmationReport mean_confirmation_time(const ModelSpec& model, const SteadyState& ss,
                                          int min_levels, double rel_tol) {
    const int b = model.block_cap;
    int levels = std::max({2 * b + 2, 50, min_levels});
    double headline = palm_mean_confirmation(model, ss, tagged_passage_times(model, levels));
    for (int round = 0;; ++round) {
        if (round == 16)
            throw NumericalError("mean_confirmation_time: truncation level did not converge");
        const double next =
            palm_mean_confirmation(model, ss, tagged_passage_times(model, 2 * levels));
        const bool done = std::abs(next - headline) <= rel_tol * std::max(std::abs(next), 1e-30);
        levels *= 2;
        headline = next;
        if (done) break;
    }
    const double reflected = palm_mean_confirmation(
        model, ss, tagged_passage_times(model, levels, SurplusPolicy::Reflect));

    const LumpedMoments phi = lumped_phi_moments(model, ss, levels, SurplusPolicy::Absorb);

    ConfirmationReport report;
    report.truncation_levels = levels;
    report.mean_confirmation = headline;
    report.truncation_error = std::abs(reflected - headline);
    report.mean_first_passage = phi.mean;
    report.var_first_passage = phi.second - phi.mean * phi.mean;
    report.phi_mass = phi.phi_mass;
    report.equilibrium_build_mean = ph_mean(ph_equilibrium(model.building));
    report.mean_confirmation_conditional =
        phi.mean / phi.phi_mass + (1.0 - phi.phi_mass) * report.equilibrium_build_mean;
    report.mean_confirmation_weighted =
        phi.mean + (1.0 - phi.phi_mass) * report.equilibrium_build_mean;
    return report;
}

RgFactors rg_factorize(const AbsorbingChain& chain) {
    const int levels = chain.levels;
    const int b = chain.dims.b;
    RgFactors f;
    f.r.resize(static_cast<size_t>(levels));
    f.u.resize(static_cast<size_t>(levels) + 1);
    f.g.resize(static_cast<size_t>(levels) + 1);

    auto raw_down = [&](int k, int j) -> Matrix {
        // Block H[k][j] below the diagonal (j < k).
        if (k <= b && j == 0) return chain.down_tilde(k + 1);
        if (k > b && j == k - b) return chain.ab1;
        const int rows = chain.dims.n;
        const int cols = j == 0 ? chain.tilde_n0 : chain.dims.n;
        return Matrix(rows, cols);
    };

    // Backward censoring: V_k[j] holds the block from level k to level j < k
    // of the chain censored to levels <= k.
    std::vector<std::map<int, Matrix>> v(static_cast<size_t>(levels) + 1);
    for (int k = levels; k >= 0; --k) {
        if (k == levels) {
            f.u[static_cast<size_t>(k)] = chain.diag_block(k);
        } else {
            const Matrix& up = k == 0 ? chain.b0_tilde : chain.a0;
            // R_k = H[k][k+1] (-U_{k+1})^{-1}: right division via the
            // transposed factorization.
            Matrix neg_u_t = transpose(scale(f.u[static_cast<size_t>(k + 1)], -1.0));
            LuSolver lu = [&]() {
                try {
                    return LuSolver(std::move(neg_u_t));
                } catch (const NumericalError&) {
                    throw NumericalError("rg_factorize: singular U block at level " + std::to_string(k + 1));
                }
            }();
            f.r[static_cast<size_t>(k)] = transpose(lu.solve(transpose(up)));
            const Matrix& rk = f.r[static_cast<size_t>(k)];

            f.u[static_cast<size_t>(k)] = chain.diag_block(k);
            auto it = v[static_cast<size_t>(k + 1)].find(k);
            if (it != v[static_cast<size_t>(k + 1)].end())
                f.u[static_cast<size_t>(k)] = f.u[static_cast<size_t>(k)] + rk * it->second;

            for (int j = 0; j < k; ++j) {
                Matrix block = raw_down(k, j);
                auto vt = v[static_cast<size_t>(k + 1)].find(j);
                if (vt != v[static_cast<size_t>(k + 1)].end()) block = block + rk * vt->second;
                if (inf_norm(block) != 0.0) v[static_cast<size_t>(k)].emplace(j, std::move(block));
            }
            continue;
        }
        for (int j = 0; j < k; ++j) {
            Matrix block = raw_down(k, j);
            if (inf_norm(block) != 0.0) v[static_cast<size_t>(k)].emplace(j, std::move(block));
        }
    }

    for (int k = 1; k <= levels; ++k) {
        Matrix neg_u = scale(f.u[static_cast<size_t>(k)], -1.0);
        LuSolver lu = [&]() {
            try {
                return LuSolver(std::move(neg_u));
            } catch (const NumericalError&) {
                throw NumericalError("rg_factorize: singular U block at level " + std::to_string(k));
            }
        }();
        for (auto& [j, block] : v[static_cast<size_t>(k)])
            f.g[static_cast<size_t>(k)].emplace(j, lu.solve(block));
    }
    return f;
}

Matrix rg_reconstruct(const AbsorbingChain& chain, const RgFactors& f) {
    const int total = chain.size();
    const int levels = chain.levels;
    Matrix iru = Matrix::identity(total);
    Matrix u(total, total);
    Matrix igl = Matrix::identity(total);
    for (int k = 0; k <= levels; ++k) {
        place(u, chain.level_offset(k), chain.level_offset(k), f.u[static_cast<size_t>(k)]);
        if (k < levels)
            place(iru, chain.level_offset(k), chain.level_offset(k + 1), f.r[static_cast<size_t>(k)], -1.0);
        for (const auto& [j, g] : f.g[static_cast<size_t>(k)])
            place(igl, chain.level_offset(k), chain.level_offset(j), g, -1.0);
    }
    return iru * u * igl;
}

Vec rg_solve(const AbsorbingChain& chain, const RgFactors& f, Vec rhs) {
    const int levels = chain.levels;
    auto seg = [&](int k) { return chain.level_offset(k); };
    auto width = [&](int k) { return k == 0 ? chain.tilde_n0 : chain.dims.n; };

    // (I - R_U) z = rhs, backward substitution over levels.
    std::vector<Vec> z(static_cast<size_t>(levels) + 1);
    for (int k = levels; k >= 0; --k) {
        Vec seg_v(rhs.begin() + seg(k), rhs.begin() + seg(k) + width(k));
        if (k < levels) {
            const Vec coupled = mat_vec(f.r[static_cast<size_t>(k)], z[static_cast<size_t>(k + 1)]);
            for (int i = 0; i < width(k); ++i) seg_v[static_cast<size_t>(i)] += coupled[static_cast<size_t>(i)];
        }
        z[static_cast<size_t>(k)] = std::move(seg_v);
    }
    // U w = z, block-diagonal solves.
    std::vector<Vec> w(static_cast<size_t>(levels) + 1);
    for (int k = 0; k <= levels; ++k)
        w[static_cast<size_t>(k)] = LuSolver(f.u[static_cast<size_t>(k)]).solve(z[static_cast<size_t>(k)]);
    // (I - G_L) x = w, forward substitution.
    std::vector<Vec> x(static_cast<size_t>(levels) + 1);
    for (int k = 0; k <= levels; ++k) {
        Vec acc = w[static_cast<size_t>(k)];
        for (const auto& [j, g] : f.g[static_cast<size_t>(k)]) {
            const Vec coupled = mat_vec(g, x[static_cast<size_t>(j)]);
            for (int i = 0; i < width(k); ++i) acc[static_cast<size_t>(i)] += coupled[static_cast<size_t>(i)];
        }
        x[static_cast<size_t>(k)] = std::move(acc);
    }
    Vec out(static_cast<size_t>(chain.size()), 0.0);
    for (int k = 0; k <= levels; ++k)
        for (int i = 0; i < width(k); ++i) out[static_cast<size_t>(seg(k) + i)] = x[static_cast<size_t>(k)][static_cast<size_t>(i)];
    return out;
}

} // namespace blockqueue
