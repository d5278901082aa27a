//
// taskeig -- task-based dense nonsymmetric eigensolver
//
// SPDX-License-Identifier: BSD-3-Clause
//
#include "taskeig/runtime.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <sstream>
#include <stdexcept>

#include "taskeig/philox.hpp"

#include <json.hpp>

namespace taskeig {

std::string ExecutionReport::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : tasks) {
        arr.push_back({{"label", t.label},
                       {"worker", t.worker},
                       {"start_ns", t.start_ns},
                       {"end_ns", t.end_ns}});
    }
    nlohmann::json j{{"tasks", arr}, {"stalls", stalls}};
    return j.dump();
}

void TaskGraph::register_matrix(const TiledMatrix& m) {
    registry_[m.id()] = {static_cast<std::uint32_t>(m.grid_rows()),
                         static_cast<std::uint32_t>(m.grid_cols())};
}

void TaskGraph::validate_handle(const TileHandle& h) const {
    auto it = registry_.find(h.matrix_id);
    if (it == registry_.end())
        throw std::invalid_argument("task references unregistered matrix");
    if (h.ti >= it->second.first || h.tj >= it->second.second)
        throw std::invalid_argument("task references tile outside matrix grid");
}

std::size_t TaskGraph::insert(Task task) {
    for (const auto& h : task.reads) validate_handle(h);
    for (const auto& h : task.writes) validate_handle(h);

    const std::size_t id = tasks_.size();
    // Dedupe edge targets for this task; multiple shared tiles between the
    // same pair of tasks produce one edge.
    std::vector<std::size_t> preds;
    for (const auto& h : task.reads) {
        auto& st = tile_state_[h];
        if (st.last_writer >= 0) preds.push_back(static_cast<std::size_t>(st.last_writer));
    }
    for (const auto& h : task.writes) {
        auto& st = tile_state_[h];
        if (st.last_writer >= 0) preds.push_back(static_cast<std::size_t>(st.last_writer));
        for (std::size_t r : st.readers_since_write)
            if (r != id) preds.push_back(r);
    }
    std::sort(preds.begin(), preds.end());
    preds.erase(std::unique(preds.begin(), preds.end()), preds.end());
    for (std::size_t p : preds) edges_.emplace_back(p, id);

    for (const auto& h : task.reads) tile_state_[h].readers_since_write.push_back(id);
    for (const auto& h : task.writes) {
        auto& st = tile_state_[h];
        st.last_writer = static_cast<std::ptrdiff_t>(id);
        st.readers_since_write.clear();
    }
    tasks_.push_back(std::move(task));
    return id;
}

void TaskGraph::run_serial() {
    Scratch scratch;
    for (auto& t : tasks_) {
        scratch.reset();
        try {
            t.kernel(scratch);
        } catch (const std::exception& e) {
            throw TaskError(t.label, e.what());
        }
    }
}

// ---------------------------------------------------------------------------
// Parallel engine: one ready-heap per worker ordered by (priority desc,
// insertion order asc), idle workers steal the best candidate from a victim
// chosen in seeded order. A single mutex guards the heaps; tasks are far
// heavier than the lock.

struct TaskGraph::Engine {
    TaskGraph& graph;
    std::size_t nworkers;
    std::uint64_t seed;

    std::mutex mu;
    std::condition_variable cv;
    std::vector<std::vector<std::size_t>> heaps; // per worker
    std::vector<std::size_t> indegree;
    std::vector<std::vector<std::size_t>> successors;
    std::size_t remaining;
    bool aborted = false;
    std::string fail_label, fail_what;

    ExecutionReport report;
    std::chrono::steady_clock::time_point t0;
    std::vector<std::thread> threads;

    Engine(TaskGraph& g, std::size_t w, std::uint64_t s)
        : graph(g), nworkers(w), seed(s) {}

    bool heap_less(std::size_t a, std::size_t b) const {
        const int pa = graph.tasks_[a].priority, pb = graph.tasks_[b].priority;
        if (pa != pb) return pa < pb; // max-heap on priority
        return a > b;                 // then min on insertion order
    }

    void push(std::size_t worker, std::size_t id) {
        auto& h = heaps[worker];
        h.push_back(id);
        std::push_heap(h.begin(), h.end(), [this](auto a, auto b) { return heap_less(a, b); });
    }

    bool pop(std::size_t worker, std::size_t& id) {
        auto& h = heaps[worker];
        if (h.empty()) return false;
        std::pop_heap(h.begin(), h.end(), [this](auto a, auto b) { return heap_less(a, b); });
        id = h.back();
        h.pop_back();
        return true;
    }

    void start() {
        indegree.assign(graph.tasks_.size(), 0);
        successors.assign(graph.tasks_.size(), {});
        for (auto [u, v] : graph.edges_) {
            ++indegree[v];
            successors[u].push_back(v);
        }
        remaining = graph.tasks_.size();
        heaps.assign(nworkers, {});
        report.tasks.assign(graph.tasks_.size(), {});
        for (std::size_t i = 0; i < graph.tasks_.size(); ++i)
            report.tasks[i].label = graph.tasks_[i].label;
        report.stalls.assign(nworkers, 0);
        std::size_t rr = 0;
        for (std::size_t i = 0; i < graph.tasks_.size(); ++i)
            if (indegree[i] == 0) push(rr++ % nworkers, i);
        t0 = std::chrono::steady_clock::now();
        threads.reserve(nworkers);
        for (std::size_t w = 0; w < nworkers; ++w)
            threads.emplace_back([this, w] { work(w); });
    }

    void work(std::size_t me) {
        Philox rng(seed ^ (0x9E3779B97F4A7C15ull * (me + 1)));
        Scratch scratch;
        std::unique_lock lk(mu);
        while (true) {
            if (aborted || remaining == 0) break;
            std::size_t id;
            bool got = pop(me, id);
            if (!got) {
                // steal: scan victims starting at a seeded offset
                const std::size_t off = static_cast<std::size_t>(rng.bounded(nworkers));
                for (std::size_t k = 0; k < nworkers && !got; ++k)
                    got = pop((off + k) % nworkers, id);
            }
            if (!got) {
                ++report.stalls[me];
                cv.wait(lk);
                continue;
            }
            lk.unlock();
            const auto ts = std::chrono::steady_clock::now();
            scratch.reset();
            bool failed = false;
            std::string what;
            try {
                graph.tasks_[id].kernel(scratch);
            } catch (const std::exception& e) {
                failed = true;
                what = e.what();
            } catch (...) {
                failed = true;
                what = "unknown exception";
            }
            const auto te = std::chrono::steady_clock::now();
            lk.lock();
            auto& rec = report.tasks[id];
            rec.worker = static_cast<int>(me);
            rec.start_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(ts - t0).count();
            rec.end_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(te - t0).count();
            if (failed && !aborted) {
                aborted = true;
                fail_label = graph.tasks_[id].label;
                fail_what = what;
            }
            --remaining;
            if (!aborted)
                for (std::size_t s : successors[id])
                    if (--indegree[s] == 0) push(me, s);
            cv.notify_all();
        }
        cv.notify_all();
    }

    ExecutionReport finish() {
        for (auto& t : threads) t.join();
        threads.clear();
        if (aborted) throw TaskError(fail_label, fail_what);
        return std::move(report);
    }
};

TaskGraph::TaskGraph() = default;

TaskGraph::~TaskGraph() {
    if (engine_) {
        try {
            engine_->finish();
        } catch (...) {
        }
    }
}

void TaskGraph::execute_async(std::size_t workers, std::uint64_t seed) {
    if (workers < 1) throw std::invalid_argument("execute: workers must be >= 1");
    if (engine_) throw std::logic_error("execute: graph already running");
    engine_ = std::make_unique<Engine>(*this, workers, seed);
    engine_->start();
}

ExecutionReport TaskGraph::wait_all() {
    if (!engine_) throw std::logic_error("wait_all: execute not started");
    auto e = std::move(engine_);
    return e->finish();
}

ExecutionReport TaskGraph::execute(std::size_t workers, std::uint64_t seed) {
    execute_async(workers, seed);
    return wait_all();
}

std::size_t default_workers() {
    if (const char* env = std::getenv("TASKEIG_WORKERS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<std::size_t>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

} // namespace taskeig
