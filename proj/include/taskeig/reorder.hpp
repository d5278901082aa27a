//
// taskeig -- task-based dense nonsymmetric eigensolver
//
// SPDX-License-Identifier: BSD-3-Clause
//
#ifndef TASKEIG_REORDER_HPP
#define TASKEIG_REORDER_HPP

#include <complex>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "taskeig/dense.hpp"
#include "taskeig/tiled_matrix.hpp"

namespace taskeig {

/// Per-diagonal-block selection flags; a 2x2 block carries one flag for its
/// conjugate pair.
struct Selection {
    struct Block {
        std::size_t start = 0;
        std::size_t size = 1;
        std::complex<double> eigenvalue; // +imag representative for pairs
    };
    std::vector<Block> blocks;
    std::vector<bool> flags; // one per block

    std::size_t selected_rows() const;
};

/// Scans the diagonal blocks of a quasi-triangular s and flags them through
/// the predicate, evaluated on both members of a conjugate pair; disagreement
/// splits the pair and is rejected.
Selection select_eigenvalues(const TiledMatrix& s,
                             const std::function<bool(std::complex<double>)>& pred);

/// Explicit per-block flags.
Selection select_eigenvalues(const TiledMatrix& s, const std::vector<bool>& flags);

/// Exactly floor(fraction * #blocks) blocks, chosen by a seeded shuffle.
Selection select_fraction(const TiledMatrix& s, double fraction, std::uint64_t seed);

/// Named predicates: "left-half-plane", "inside-unit-disk",
/// "largest-magnitude-k" (k required for the last one).
Selection select_by_name(const TiledMatrix& s, const std::string& name,
                         std::size_t k = 0);

/// Outcome of the in-window bubble pass: the local block permutation and the
/// blocks whose upward swap was rejected.
struct WindowReorderOutcome {
    bool executed = true;              // false: entry layout mismatch, no-op
    std::vector<std::size_t> order;    // order[new_pos] = old local block index
    std::vector<bool> stuck;           // per old local block index
};

/// Moves the selected blocks of a dense window to its top via adjacent swaps,
/// preserving their relative order; all transformations are accumulated into
/// acc (resized to the window, starts as identity).
WindowReorderOutcome window_reorder(DenseMatrix& w,
                                    const std::vector<std::size_t>& block_sizes,
                                    const std::vector<bool>& selected,
                                    DenseMatrix& acc);

struct ReorderOptions {
    std::size_t window_size = 0; // 0: tile_size
    std::size_t workers = 0;
    std::uint64_t seed = 0;
    bool strict = false; // throw on rejected swaps instead of recording
};

struct ReorderResult {
    TiledMatrix s;
    std::optional<TiledMatrix> q;
    std::vector<std::size_t> permutation;     // original block -> final block slot
    std::vector<std::size_t> rejected_blocks; // original indices left in place
    struct PlanWindow {
        std::size_t position, extent, moved_blocks;
    };
    std::vector<PlanWindow> plan; // executed window descriptors, in order
    bool clean = true;            // no rejections, selection fully leading
};

/// Moves every selected eigenvalue to the leading diagonal blocks through
/// chains of overlapping windows; q (if given) is updated to q * Q3.
ReorderResult reorder_schur(TiledMatrix s, std::optional<TiledMatrix> q,
                            const Selection& sel, const ReorderOptions& opts = {});

} // namespace taskeig

#endif
