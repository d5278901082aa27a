//
// taskeig -- task-based dense nonsymmetric eigensolver
//
// SPDX-License-Identifier: BSD-3-Clause
//
#include "taskeig/hessenberg.hpp"

#include <cmath>
#include <stdexcept>

#include "taskeig/kernels.hpp"

namespace taskeig {

CompactWY reduce_panel(TiledMatrix& a, std::size_t k, std::size_t b,
                       PanelAccessLog* log) {
    const std::size_t n = a.rows();
    if (b < 1 || k + b + 1 > n)
        throw std::invalid_argument("reduce_panel: panel exceeds matrix");
    const std::size_t m = n - k - 1; // rows k+1..n
    const std::size_t w = n - k;     // cols k..n

    CompactWY wy;
    wy.n = n;
    wy.panel_col = k;
    wy.width = b;
    wy.v = DenseMatrix(m, b);
    wy.t = DenseMatrix(b, b);
    wy.y = DenseMatrix(m, b);

    // single scratch copy of the panel plus everything trailing it
    DenseMatrix p;
    a.gather(k + 1, n, k, n, p);

    std::vector<double> x(m), s(b), tw(b);
    for (std::size_t i = 0; i < b; ++i) {
        // bring the column up to date with the previous reflectors
        for (std::size_t r = 0; r < m; ++r) x[r] = p(r, i);
        if (i > 0) {
            // x -= Y * V(row of panel column)^T
            for (std::size_t j = 0; j < i; ++j) {
                const double vr = wy.v(i - 1, j);
                if (vr == 0.0) continue;
                for (std::size_t r = 0; r < m; ++r) x[r] -= wy.y(r, j) * vr;
            }
            // x -= V (T^T (V^T x))
            for (std::size_t j = 0; j < i; ++j) {
                double acc = 0.0;
                for (std::size_t r = 0; r < m; ++r) acc += wy.v(r, j) * x[r];
                s[j] = acc;
            }
            for (std::size_t j = 0; j < i; ++j) {
                double acc = 0.0;
                for (std::size_t l = 0; l <= j; ++l) acc += wy.t(l, j) * s[l];
                tw[j] = acc;
            }
            for (std::size_t j = 0; j < i; ++j) {
                const double f = tw[j];
                if (f == 0.0) continue;
                for (std::size_t r = 0; r < m; ++r) x[r] -= wy.v(r, j) * f;
            }
        }

        auto [refl, beta] =
            kernels::make_reflector(std::span<const double>(x.data() + i, m - i));
        // finalized panel column: updated head, beta, explicit zeros
        for (std::size_t r = 0; r < i; ++r) p(r, i) = x[r];
        p(i, i) = beta;
        for (std::size_t r = i + 1; r < m; ++r) p(r, i) = 0.0;
        for (std::size_t r = i; r < m; ++r) wy.v(r, i) = refl.v[r - i];

        // T(:,i) = -tau * T(0:i,0:i) * (V^T v);  T(i,i) = tau
        for (std::size_t j = 0; j < i; ++j) {
            double acc = 0.0;
            for (std::size_t r = i; r < m; ++r) acc += wy.v(r, j) * wy.v(r, i);
            s[j] = acc;
        }
        for (std::size_t j = 0; j < i; ++j) {
            double acc = 0.0;
            for (std::size_t l = j; l < i; ++l) acc += wy.t(j, l) * s[l];
            wy.t(j, i) = -refl.tau * acc;
        }
        wy.t(i, i) = refl.tau;

        // Y(:,i) = tau * (A_trail v - Y (V^T v)); the matvec reads only the
        // section trailing the current column
        if (log)
            log->matvecs.push_back(PanelAccessLog::Span{
                k + i, k + 1, n, k + 1 + i, n});
        std::vector<double> ww(m, 0.0);
        for (std::size_t r = i; r < m; ++r) {
            const double vr = wy.v(r, i);
            if (vr == 0.0) continue;
            const std::size_t col = r + 1; // local column of global col k+1+r
            for (std::size_t rr = 0; rr < m; ++rr) ww[rr] += p(rr, col) * vr;
        }
        for (std::size_t j = 0; j < i; ++j) {
            const double f = s[j];
            if (f == 0.0) continue;
            for (std::size_t r = 0; r < m; ++r) ww[r] -= wy.y(r, j) * f;
        }
        for (std::size_t r = 0; r < m; ++r) wy.y(r, i) = refl.tau * ww[r];
    }

    // only the panel columns changed
    DenseMatrix panel_cols(m, b);
    for (std::size_t j = 0; j < b; ++j)
        for (std::size_t r = 0; r < m; ++r) panel_cols(r, j) = p(r, j);
    a.scatter(k + 1, n, k, k + b, panel_cols);
    return wy;
}

void update_trailing(TiledMatrix& a, const CompactWY& wy, std::size_t c0,
                     std::size_t c1) {
    const std::size_t n = wy.n, k = wy.panel_col, b = wy.width;
    const std::size_t m = n - k - 1;
    if (c0 < k + b || c1 > n || c0 >= c1)
        throw std::invalid_argument("update_trailing: bad column range");
    const std::size_t cw = c1 - c0;
    DenseMatrix g;
    a.gather(k + 1, n, c0, c1, g);

    // g -= Y * V(rows c0..c1)^T
    DenseMatrix vrows(cw, b);
    for (std::size_t j = 0; j < b; ++j)
        for (std::size_t c = 0; c < cw; ++c) vrows(c, j) = wy.v(c0 + c - k - 1, j);
    blas::gemm(false, true, m, cw, b, -1.0, wy.y.data(), m, vrows.data(), cw,
               g.data(), m);
    // g -= V (T^T (V^T g))
    DenseMatrix vt_g(b, cw), t_vt_g(b, cw);
    blas::gemm(true, false, b, cw, m, 1.0, wy.v.data(), m, g.data(), m,
               vt_g.data(), b);
    blas::gemm(true, false, b, cw, b, 1.0, wy.t.data(), b, vt_g.data(), b,
               t_vt_g.data(), b);
    blas::gemm(false, false, m, cw, b, -1.0, wy.v.data(), m, t_vt_g.data(), b,
               g.data(), m);

    a.scatter(k + 1, n, c0, c1, g);
}

void update_top_right(TiledMatrix& a, const CompactWY& wy, std::size_t r0,
                      std::size_t r1) {
    const std::size_t n = wy.n, k = wy.panel_col, b = wy.width;
    const std::size_t m = n - k - 1;
    if (r1 > k + 1 || r0 >= r1)
        throw std::invalid_argument("update_top_right: bad row range");
    const std::size_t rh = r1 - r0;
    DenseMatrix g;
    a.gather(r0, r1, k + 1, n, g);

    DenseMatrix gv(rh, b), gvt(rh, b);
    blas::gemm(false, false, rh, b, m, 1.0, g.data(), rh, wy.v.data(), m,
               gv.data(), rh);
    blas::gemm(false, false, rh, b, b, 1.0, gv.data(), rh, wy.t.data(), b,
               gvt.data(), rh);
    blas::gemm(false, true, rh, m, b, -1.0, gvt.data(), rh, wy.v.data(), m,
               g.data(), rh);

    a.scatter(r0, r1, k + 1, n, g);
}

namespace {

/// a <- a (I - V T V^T) on rows [r0, r1), used for Q1 accumulation: same
/// arithmetic as update_top_right but without the row-range restriction.
void apply_panel_from_right(TiledMatrix& a, const CompactWY& wy, std::size_t r0,
                            std::size_t r1) {
    const std::size_t n = wy.n, k = wy.panel_col, b = wy.width;
    const std::size_t m = n - k - 1;
    const std::size_t rh = r1 - r0;
    DenseMatrix g;
    a.gather(r0, r1, k + 1, n, g);
    DenseMatrix gv(rh, b), gvt(rh, b);
    blas::gemm(false, false, rh, b, m, 1.0, g.data(), rh, wy.v.data(), m,
               gv.data(), rh);
    blas::gemm(false, false, rh, b, b, 1.0, gv.data(), rh, wy.t.data(), b,
               gvt.data(), rh);
    blas::gemm(false, true, rh, m, b, -1.0, gvt.data(), rh, wy.v.data(), m,
               g.data(), rh);
    a.scatter(r0, r1, k + 1, n, g);
}

} // namespace

HessenbergResult hessenberg_reduce(TiledMatrix a, bool accumulate_q,
                                   const HessenbergOptions& opts) {
    const std::size_t n = a.rows();
    if (a.cols() != n)
        throw std::invalid_argument("hessenberg_reduce: matrix must be square");
    const std::size_t ts = a.tile_size();
    const std::size_t workers = opts.workers ? opts.workers : default_workers();
    const std::size_t bdef =
        opts.panel_width ? opts.panel_width : std::min<std::size_t>(ts, 64);

    HessenbergResult out{std::move(a), std::nullopt, {}};
    TiledMatrix& h = out.h;
    if (accumulate_q) out.q = TiledMatrix::identity(n, ts);

    if (n < 3) {
        return out; // already Hessenberg
    }

    TaskGraph graph;
    graph.register_matrix(h);
    if (out.q) graph.register_matrix(*out.q);

    struct PanelDesc {
        std::size_t k, b;
        std::shared_ptr<CompactWY> wy;
    };
    std::vector<PanelDesc> panels;
    for (std::size_t k = 0; k + 2 < n; k += bdef)
        panels.push_back({k, std::min(bdef, n - 2 - k), std::make_shared<CompactWY>()});

    TiledMatrix* hp = &h;
    for (const auto& pd : panels) {
        const std::size_t k = pd.k, b = pd.b;
        auto wy = pd.wy;
        const auto panel_tiles = h.window_handles(k + 1, n, k, k + b);
        {
            Task t;
            t.reads = h.window_handles(k + 1, n, k, n);
            t.writes = panel_tiles;
            t.priority = kPriorityCritical;
            t.label = "hess:panel:" + std::to_string(k);
            t.kernel = [hp, k, b, wy](Scratch&) { *wy = reduce_panel(*hp, k, b); };
            graph.insert(std::move(t));
        }
        // trailing updates, one task per tile column
        for (std::size_t tj = h.tile_col_of(k + b); tj < h.grid_cols(); ++tj) {
            const std::size_t c0 = std::max(k + b, h.tile_col_begin(tj));
            const std::size_t c1 = h.tile_col_end(tj);
            if (c0 >= c1) continue;
            Task t;
            t.reads = panel_tiles;
            t.writes = h.window_handles(k + 1, n, c0, c1);
            t.priority = kPriorityCritical;
            t.label = "hess:trail:" + std::to_string(k) + ":" + std::to_string(tj);
            t.kernel = [hp, wy, c0, c1](Scratch&) { update_trailing(*hp, *wy, c0, c1); };
            graph.insert(std::move(t));
        }
        // top rows from the right, one task per tile row; these never feed
        // the critical path
        for (std::size_t ti = 0; ti <= h.tile_row_of(k); ++ti) {
            const std::size_t r0 = h.tile_row_begin(ti);
            const std::size_t r1 = std::min(k + 1, h.tile_row_end(ti));
            if (r0 >= r1) continue;
            Task t;
            t.reads = panel_tiles;
            t.writes = h.window_handles(r0, r1, k + 1, n);
            t.priority = kPriorityRightUpdate;
            t.label = "hess:top:" + std::to_string(k) + ":" + std::to_string(ti);
            t.kernel = [hp, wy, r0, r1](Scratch&) { update_top_right(*hp, *wy, r0, r1); };
            graph.insert(std::move(t));
        }
    }
    if (out.q) {
        TiledMatrix* qp = &*out.q;
        for (const auto& pd : panels) {
            auto wy = pd.wy;
            const auto panel_tiles = h.window_handles(pd.k + 1, n, pd.k, pd.k + pd.b);
            for (std::size_t ti = 0; ti < out.q->grid_rows(); ++ti) {
                const std::size_t r0 = out.q->tile_row_begin(ti);
                const std::size_t r1 = out.q->tile_row_end(ti);
                Task t;
                t.reads = panel_tiles;
                t.writes = out.q->window_handles(r0, r1, pd.k + 1, n);
                t.priority = kPriorityAccumulate;
                t.label = "hess:q:" + std::to_string(pd.k) + ":" + std::to_string(ti);
                t.kernel = [qp, wy, r0, r1](Scratch&) {
                    apply_panel_from_right(*qp, *wy, r0, r1);
                };
                graph.insert(std::move(t));
            }
        }
    }

    out.report = graph.execute(workers, opts.seed);
    return out;
}

} // namespace taskeig
