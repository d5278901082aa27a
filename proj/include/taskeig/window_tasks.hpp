//
// taskeig -- task-based dense nonsymmetric eigensolver
//
// SPDX-License-Identifier: BSD-3-Clause
//
#ifndef TASKEIG_WINDOW_TASKS_HPP
#define TASKEIG_WINDOW_TASKS_HPP

#include <memory>
#include <string>

#include "taskeig/runtime.hpp"
#include "taskeig/tiled_matrix.hpp"

namespace taskeig {

/// Orthogonal similarity local to the diagonal range [a, b), produced by a
/// window task and consumed by the off-diagonal update tasks.
struct WindowAccumulator {
    std::size_t a = 0;
    std::size_t b = 0;
    DenseMatrix q; // (b-a) x (b-a)
};

/// Propagates a window similarity to the off-window tiles: left updates
/// (rows [a,b) x columns [b, n) <- Q^T G) parallel over tile columns, right
/// updates (rows [0, a) x columns [a, b) <- G Q) parallel over tile rows at
/// lower priority, and accumulator updates of q_mat columns [a, b) at the
/// lowest priority. dep_tiles carries the window task's write set so the
/// updates order after it.
void insert_window_updates(TaskGraph& graph, TiledMatrix& h, TiledMatrix* q_mat,
                           const std::shared_ptr<WindowAccumulator>& acc,
                           const std::vector<TileHandle>& dep_tiles,
                           const std::string& tag);

/// Synchronous variant used by the standalone phase operations.
void apply_window_updates(TiledMatrix& h, TiledMatrix* q_mat,
                          const WindowAccumulator& acc);

} // namespace taskeig

#endif
