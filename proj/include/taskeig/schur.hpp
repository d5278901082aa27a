//
// taskeig -- task-based dense nonsymmetric eigensolver
//
// SPDX-License-Identifier: BSD-3-Clause
//
#ifndef TASKEIG_SCHUR_HPP
#define TASKEIG_SCHUR_HPP

#include <complex>
#include <optional>
#include <vector>

#include "taskeig/runtime.hpp"
#include "taskeig/tiled_matrix.hpp"

namespace taskeig {

enum class DeflationCondition { classic, norm_stable };

struct SchurOptions {
    DeflationCondition deflation = DeflationCondition::norm_stable;
    std::size_t shift_count = 0;     // 0: max(4, round-to-even(active/16)), cap 64
    std::size_t aed_window = 0;      // 0: 3m/2
    std::size_t iteration_limit = 0; // 0: 30 n total sweeps
    std::size_t small_threshold = 64;
    std::size_t workers = 0;
    std::uint64_t seed = 0;
    bool keep_reports = false; // retain per-round execution reports
};

/// Outcome of one aggressive-early-deflation step.
struct AedResult {
    std::size_t window = 0;
    std::size_t deflated = 0;
    std::vector<std::complex<double>> shifts; // eigenvalues that failed the check
    bool spike_eliminated = false;
    bool converged = true;
    bool swap_rejected = false;
};

/// Positions of the 3x3 bulges of one multishift sweep; `positions` are the
/// rows of the next reflector of each bulge, bottom-most first.
struct BulgeChain {
    std::vector<std::size_t> positions;
    std::size_t shifts_used = 0;
    std::size_t chain_begin = 0; // l
    std::size_t chain_end = 0;   // ihi
};

struct SchurDecomposition {
    TiledMatrix s;
    std::optional<TiledMatrix> q;
    std::vector<std::complex<double>> eigenvalues;
    std::size_t sweeps = 0;
    bool converged = true;
    std::size_t converged_trailing = 0; // meaningful when !converged
    std::vector<ExecutionReport> round_reports;
};

/// Threshold test deciding whether a spike entry may be zeroed.
/// classic: |s| <= max(eps * sum of |diagonal| of the block, safe-minimum);
/// norm-stable: |s| <= eps * ||window||_F.
bool deflation_check(double spike_mag, double block_diag_abs_sum,
                     DeflationCondition cond, double window_frob_norm);

/// One AED step on the trailing window of the active range [l, ihi); runs a
/// window task plus left/right/accumulator updates on a private graph.
AedResult aed_step(TiledMatrix& h, TiledMatrix* q, std::size_t l, std::size_t ihi,
                   std::size_t window, const SchurOptions& opts = {});

/// Plants m/2 bulges at the top of the active range using the given
/// conjugate-closed shifts (synchronous window work plus off-window updates).
BulgeChain introduce_bulges(TiledMatrix& h, TiledMatrix* q, std::size_t l,
                            std::size_t ihi,
                            const std::vector<std::complex<double>>& shifts);

/// Graph-shape record of one chase: window task ids and the edges among the
/// tasks the chase inserted (for dependency-structure checks).
struct ChaseTrace {
    std::vector<std::size_t> window_tasks;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::vector<std::string> labels;
};

/// Chases every bulge of the chain off the bottom of the active range with
/// windowed tasks and accumulator-based off-window updates.
void chase_bulges(TiledMatrix& h, TiledMatrix* q, BulgeChain& chain,
                  std::size_t window_size, const SchurOptions& opts = {},
                  ChaseTrace* trace = nullptr);

/// Multi-shift QR with aggressive early deflation: reduces an upper
/// Hessenberg matrix to standardized real Schur form. If q is given it is
/// multiplied through (Q1 -> Q1 Q2).
SchurDecomposition schur_reduce(TiledMatrix h, std::optional<TiledMatrix> q,
                                const SchurOptions& opts = {});

} // namespace taskeig

#endif
