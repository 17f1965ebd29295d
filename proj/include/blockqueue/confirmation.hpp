#pragma once

#include <map>
#include <vector>

#include "blockqueue/matgeo.hpp"

namespace blockqueue {

// What happens to the arrival rate that would leave the last kept level:
// route it to absorption (optimistic) or fold it onto the diagonal as if the
// arrival were ignored (pessimistic). The gap between the two first-passage
// means brackets the truncation error.
enum class SurplusPolicy { Absorb, Reflect };

// Truncated absorbing chain tracking a tagged transaction from arrival to
// the pegging of its block. Level k >= 1: k transactions waiting (tagged
// among them), stage 0 while generation runs, stage l >= 1 while a block of
// l is being built. Level 0: the tagged transaction sits in the block under
// construction (stage = block size), so building completion absorbs with
// probability one. From level k > b, building completion absorbs with
// probability b/k and otherwise restarts generation at the same level.
struct AbsorbingChain {
    LevelDims dims;
    int levels = 0; // K
    SurplusPolicy policy = SurplusPolicy::Absorb;

    Matrix a0;        // shared arrival block, n x n
    Matrix ab1;       // batch-departure block, n x n
    Matrix a1_tilde;  // within-level block for levels 1..b (no generation restart)
    Matrix t0_beta;   // I (x) (T0 beta) kernel for the level-dependent restart
    Matrix s0_alpha;  // I (x) (S0 alpha)
    Matrix b1_tilde;  // level-0 within-level block
    Matrix b0_tilde;  // level-0 arrival block (to level 1)
    int tilde_n0 = 0; // level-0 width, (b+1) * m0 * m1

    int size() const { return tilde_n0 + levels * dims.n; }
    int level_offset(int k) const { return k == 0 ? 0 : tilde_n0 + (k - 1) * dims.n; }

    // Within-level block at level k (adds the (k-b)/k restart for k > b and
    // the surplus fold at level K under the Reflect policy).
    Matrix diag_block(int k) const;

    // B~_k for k = 2..b+1: generation completion from level k-1, everyone
    // fits, the tagged block of size k-1 starts building.
    Matrix down_tilde(int k) const;

    Matrix dense() const;   // assembled H_K
    Vec absorption() const;  // H0_K, built from the stated per-level factors
    BandedMatrix banded() const;

    // x with H_K x = -e via a banded factorization.
    Vec solve_neg_e() const;
};

AbsorbingChain build_absorbing_chain(const ModelSpec& model, int levels,
                                     SurplusPolicy policy = SurplusPolicy::Absorb);

// Post-arrival initial vectors in the chain layout: gamma_k = pi_k / (1 - pi0 e)
// on levels k >= 1, phi its generation-stage restriction, psi = gamma - phi.
struct InitialVectors {
    int levels = 0;
    double phi_mass = 0.0;   // phi e
    double gamma_mass = 0.0; // truncated gamma e, -> 1 as K grows
    Vec gamma, phi, psi;     // flat vectors of length chain.size()
};

InitialVectors initial_vectors(const SteadyState& ss, const AbsorbingChain& chain);

// -init H_K^{-1} e, by one linear solve.
double mean_first_passage(const AbsorbingChain& chain, const Vec& init);

// 2 init H_K^{-2} e - (init H_K^{-1} e)^2.
double variance_first_passage(const AbsorbingChain& chain, const Vec& init);

// Expected remaining confirmation time per state of the selection-resolved
// tagged chain: the generation-completion rate splits b/k (tagged drafted
// into the block) versus (k-b)/k (tagged left waiting) at the selection
// instant, building stages within a level collapse (they share one law), and
// once the tagged transaction is in the block only the building phase and
// the environment matter.
struct TaggedPassageTimes {
    int levels = 0;
    int wm = 0, wb = 0;          // generation / building widths per level
    Vec in_block;                // length wb: tagged already in the block
    std::vector<Vec> per_level;  // [k-1] for level k, layout [mining | building]
};

TaggedPassageTimes tagged_passage_times(const ModelSpec& model, int levels,
                                        SurplusPolicy policy = SurplusPolicy::Absorb);

// Mean confirmation time under the exact arrival-conditional (Palm) state
// distribution: each stationary state is weighted by its arrival-marked
// transition rates, the arrival is appended to the waiting room, and the
// tagged chain is read at the resulting state.
double palm_mean_confirmation(const ModelSpec& model, const SteadyState& ss,
                              const TaggedPassageTimes& times);

struct ConfirmationReport {
    double mean_confirmation = 0.0;       // selection-resolved chain + Palm initial law
    double mean_first_passage = 0.0;      // -(0,phi) H^{-1} e on the absorbing chain
    double var_first_passage = 0.0;       // factor-2 second moment, absorbing chain
    double phi_mass = 0.0;                // phi e
    double equilibrium_build_mean = 0.0;  // E[Gamma_s]
    double mean_confirmation_conditional = 0.0; // E[xi|(0,phi)]/(phi e) + (1-phi e) E[Gamma_s]
    double mean_confirmation_weighted = 0.0;    // -(0,phi)H^{-1}e + (1-phi e) E[Gamma_s]
    int truncation_levels = 0;
    double truncation_error = 0.0;        // |absorb - reflect| bracket width
};

// Average confirmation time report. The headline value comes from the
// selection-resolved chain under the Palm initial law (the variant that
// matches tagged simulation); the first-passage/residual-building
// combination is evaluated alongside in both its conditional-mean and
// phi-weighted readings.
// The truncation level doubles from max(2b+2, 50) until the headline mean
// moves by less than rel_tol of itself.
ConfirmationReport mean_confirmation_time(const ModelSpec& model, const SteadyState& ss,
                                          int min_levels = 0, double rel_tol = 1e-6);

// UL-type factorization H = (I - R_U) U (I - G_L) over the truncated level
// structure, by backward censoring from the last level.
struct RgFactors {
    std::vector<Matrix> r;                // R_0..R_{K-1} (R_k couples level k to k+1)
    std::vector<Matrix> u;                // U_0..U_K (block diagonal)
    std::vector<std::map<int, Matrix>> g; // g[k][j] = G_{k,j} for j < k
};

RgFactors rg_factorize(const AbsorbingChain& chain);
Matrix rg_reconstruct(const AbsorbingChain& chain, const RgFactors& f);
Vec rg_solve(const AbsorbingChain& chain, const RgFactors& f, Vec rhs);

} // namespace blockqueue
