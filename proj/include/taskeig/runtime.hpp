//
// taskeig -- task-based dense nonsymmetric eigensolver
//
// SPDX-License-Identifier: BSD-3-Clause
//
#ifndef TASKEIG_RUNTIME_HPP
#define TASKEIG_RUNTIME_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "taskeig/tiled_matrix.hpp"

namespace taskeig {

/// Per-worker scratch arena, recycled between tasks so kernels never
/// allocate tile-sized buffers themselves.
class Scratch {
public:
    /// Returns an uninitialized block of n doubles, valid until the task ends.
    double* get(std::size_t n) {
        if (used_ + n > buf_.size()) buf_.resize(std::max(used_ + n, buf_.size() * 2));
        double* p = buf_.data() + used_;
        used_ += n;
        return p;
    }
    void reset() { used_ = 0; }

private:
    std::vector<double> buf_;
    std::size_t used_ = 0;
};

using Kernel = std::function<void(Scratch&)>;

/// Deferred computation over a declared set of tiles. The kernel must be
/// deterministic given tile contents and touch no tile outside reads+writes.
struct Task {
    Kernel kernel;
    std::vector<TileHandle> reads;
    std::vector<TileHandle> writes;
    int priority = 0;
    std::string label;
};

struct TaskRecord {
    std::string label;
    int worker = -1;
    std::int64_t start_ns = 0;
    std::int64_t end_ns = 0;
};

struct ExecutionReport {
    std::vector<TaskRecord> tasks;        // indexed by task id
    std::vector<std::uint64_t> stalls;    // per worker: ready-queue misses
    std::string to_json() const;
};

struct TaskError : std::runtime_error {
    std::string label;
    TaskError(std::string lbl, const std::string& what)
        : std::runtime_error("task '" + lbl + "' failed: " + what), label(std::move(lbl)) {}
};

/// Priority bands used across the phases. Critical-path work preempts
/// right-hand-side updates, which preempt orthogonal-accumulator updates.
inline constexpr int kPriorityCritical = 100;
inline constexpr int kPriorityRightUpdate = 10;
inline constexpr int kPriorityAccumulate = 0;

/// Task graph with dependences derived from declared read/write sets in
/// insertion order:
///   last writer -> new reader, last writer -> new writer,
///   each reader since the last write -> new writer.
/// Usage is phased: insert everything, then execute; no insertion while
/// running.
class TaskGraph {
public:
    TaskGraph();
    TaskGraph(const TaskGraph&) = delete;
    TaskGraph& operator=(const TaskGraph&) = delete;
    ~TaskGraph();

    /// Tasks may only reference tiles of registered matrices.
    void register_matrix(const TiledMatrix& m);

    std::size_t insert(Task task);

    std::size_t size() const { return tasks_.size(); }
    const std::vector<std::pair<std::size_t, std::size_t>>& edges() const { return edges_; }
    const Task& task(std::size_t id) const { return tasks_[id]; }

    /// Runs every task on the calling thread in insertion order. This is the
    /// definitional serial semantics the parallel scheduler must reproduce.
    void run_serial();

    /// Runs the graph on a worker pool; returns after everything finished.
    /// The seed only perturbs work stealing, never results.
    ExecutionReport execute(std::size_t workers, std::uint64_t seed = 0);

    void execute_async(std::size_t workers, std::uint64_t seed = 0);
    /// Blocks until all tasks finished; rethrows the first task failure.
    ExecutionReport wait_all();

private:
    struct TileState {
        std::ptrdiff_t last_writer = -1;
        std::vector<std::size_t> readers_since_write;
    };

    void validate_handle(const TileHandle& h) const;

    std::vector<Task> tasks_;
    std::vector<std::pair<std::size_t, std::size_t>> edges_;
    std::map<TileHandle, TileState> tile_state_;
    std::map<std::uint64_t, std::pair<std::uint32_t, std::uint32_t>> registry_;

    struct Engine;
    std::unique_ptr<Engine> engine_;
};

/// Default worker count: TASKEIG_WORKERS env var, else hardware concurrency.
std::size_t default_workers();

} // namespace taskeig

#endif
