//
// taskeig -- task-based dense nonsymmetric eigensolver
//
// SPDX-License-Identifier: BSD-3-Clause
//
#ifndef TASKEIG_HESSENBERG_HPP
#define TASKEIG_HESSENBERG_HPP

#include <memory>
#include <optional>

#include "taskeig/runtime.hpp"
#include "taskeig/tiled_matrix.hpp"

namespace taskeig {

/// Accumulated panel reflectors I - V T V^T plus the intermediate product
/// Y = A V T restricted to the rows the panel owns (rows k+1..n; rows above
/// the panel never enter the panel reduction and are updated from the right
/// by separate tasks).
struct CompactWY {
    std::size_t n = 0;
    std::size_t panel_col = 0; // k
    std::size_t width = 0;     // b
    DenseMatrix v;             // (n-k-1) x b, unit diagonal at local row i
    DenseMatrix t;             // b x b upper triangular
    DenseMatrix y;             // (n-k-1) x b, trailing rows of A*V*T
};

/// Debug instrumentation: row/column spans touched by the panel's
/// matrix-vector products.
struct PanelAccessLog {
    struct Span {
        std::size_t column; // global panel column the matvec belongs to
        std::size_t row_begin, row_end;
        std::size_t col_begin, col_end;
    };
    std::vector<Span> matvecs;
};

/// Reduces panel columns [k, k+b) of a to the Hessenberg pattern in place
/// (rows k+1..n), leaving the trailing matrix untouched; the pending block
/// updates are described by the returned CompactWY.
CompactWY reduce_panel(TiledMatrix& a, std::size_t k, std::size_t b,
                       PanelAccessLog* log = nullptr);

/// Applies a <- (I - V T V^T)^T (a - Y V^T) to rows [k+1, n) of the column
/// range [c0, c1), which must lie right of the panel.
void update_trailing(TiledMatrix& a, const CompactWY& wy, std::size_t c0,
                     std::size_t c1);

/// Applies a <- a (I - V T V^T) to the row range [r0, r1), which must lie
/// above the panel (r1 <= k+1); touches columns k+1..n.
void update_top_right(TiledMatrix& a, const CompactWY& wy, std::size_t r0,
                      std::size_t r1);

struct HessenbergOptions {
    std::size_t workers = 0;       // 0: default_workers()
    std::size_t panel_width = 0;   // 0: min(tile_size, 64)
    std::uint64_t seed = 0;        // scheduler perturbation only
};

struct HessenbergResult {
    TiledMatrix h;
    std::optional<TiledMatrix> q;
    ExecutionReport report;
};

/// Blocked Hessenberg reduction a = Q1 H Q1^T driven through the task
/// runtime. The input is consumed by value; pass accumulate_q = false to
/// skip the orthogonal factor.
HessenbergResult hessenberg_reduce(TiledMatrix a, bool accumulate_q,
                                   const HessenbergOptions& opts = {});

} // namespace taskeig

#endif
