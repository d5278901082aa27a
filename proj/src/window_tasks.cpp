//
// taskeig -- task-based dense nonsymmetric eigensolver
//
// SPDX-License-Identifier: BSD-3-Clause
//
#include "taskeig/window_tasks.hpp"

namespace taskeig {

namespace {

void left_update(TiledMatrix& h, const WindowAccumulator& acc, std::size_t c0,
                 std::size_t c1) {
    const std::size_t d = acc.b - acc.a;
    DenseMatrix g, gn(d, c1 - c0);
    h.gather(acc.a, acc.b, c0, c1, g);
    blas::gemm(true, false, d, c1 - c0, d, 1.0, acc.q.data(), d, g.data(), d,
               gn.data(), d);
    h.scatter(acc.a, acc.b, c0, c1, gn);
}

void right_update(TiledMatrix& h, const WindowAccumulator& acc, std::size_t r0,
                  std::size_t r1) {
    const std::size_t d = acc.b - acc.a;
    DenseMatrix g, gn(r1 - r0, d);
    h.gather(r0, r1, acc.a, acc.b, g);
    blas::gemm(false, false, r1 - r0, d, d, 1.0, g.data(), r1 - r0, acc.q.data(), d,
               gn.data(), r1 - r0);
    h.scatter(r0, r1, acc.a, acc.b, gn);
}

} // namespace

void insert_window_updates(TaskGraph& graph, TiledMatrix& h, TiledMatrix* q_mat,
                           const std::shared_ptr<WindowAccumulator>& acc,
                           const std::vector<TileHandle>& dep_tiles,
                           const std::string& tag) {
    TiledMatrix* hp = &h;
    const std::size_t n = h.cols();
    // left updates: one task per tile column right of the window
    {
        const std::size_t cstart = acc->b;
        for (std::size_t tj = (cstart < n) ? h.tile_col_of(cstart) : h.grid_cols();
             tj < h.grid_cols(); ++tj) {
            const std::size_t c0 = std::max(cstart, h.tile_col_begin(tj));
            const std::size_t c1 = h.tile_col_end(tj);
            if (c0 >= c1) continue;
            Task t;
            t.reads = dep_tiles;
            t.writes = h.window_handles(acc->a, acc->b, c0, c1);
            t.priority = kPriorityCritical;
            t.label = tag + ":L:" + std::to_string(tj);
            t.kernel = [hp, acc, c0, c1](Scratch&) { left_update(*hp, *acc, c0, c1); };
            graph.insert(std::move(t));
        }
    }
    // right updates: one task per tile row above the window, lower priority
    if (acc->a > 0) {
        for (std::size_t ti = 0; ti <= h.tile_row_of(acc->a - 1); ++ti) {
            const std::size_t r0 = h.tile_row_begin(ti);
            const std::size_t r1 = std::min(acc->a, h.tile_row_end(ti));
            if (r0 >= r1) continue;
            Task t;
            t.reads = dep_tiles;
            t.writes = h.window_handles(r0, r1, acc->a, acc->b);
            t.priority = kPriorityRightUpdate;
            t.label = tag + ":R:" + std::to_string(ti);
            t.kernel = [hp, acc, r0, r1](Scratch&) { right_update(*hp, *acc, r0, r1); };
            graph.insert(std::move(t));
        }
    }
    // orthogonal accumulator updates, lowest priority
    if (q_mat) {
        TiledMatrix* qp = q_mat;
        for (std::size_t ti = 0; ti < q_mat->grid_rows(); ++ti) {
            const std::size_t r0 = q_mat->tile_row_begin(ti);
            const std::size_t r1 = q_mat->tile_row_end(ti);
            Task t;
            t.reads = dep_tiles;
            t.writes = q_mat->window_handles(r0, r1, acc->a, acc->b);
            t.priority = kPriorityAccumulate;
            t.label = tag + ":Q:" + std::to_string(ti);
            t.kernel = [qp, acc, r0, r1](Scratch&) { right_update(*qp, *acc, r0, r1); };
            graph.insert(std::move(t));
        }
    }
}

void apply_window_updates(TiledMatrix& h, TiledMatrix* q_mat,
                          const WindowAccumulator& acc) {
    const std::size_t n = h.cols();
    if (acc.b < n) left_update(h, acc, acc.b, n);
    if (acc.a > 0) right_update(h, acc, 0, acc.a);
    if (q_mat) {
        const std::size_t d = acc.b - acc.a;
        DenseMatrix g, gn(q_mat->rows(), d);
        q_mat->gather(0, q_mat->rows(), acc.a, acc.b, g);
        blas::gemm(false, false, q_mat->rows(), d, d, 1.0, g.data(), q_mat->rows(),
                   acc.q.data(), d, gn.data(), q_mat->rows());
        q_mat->scatter(0, q_mat->rows(), acc.a, acc.b, gn);
    }
}

} // namespace taskeig
