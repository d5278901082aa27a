//
// taskeig -- task-based dense nonsymmetric eigensolver
//
// SPDX-License-Identifier: BSD-3-Clause
//
#include "taskeig/reorder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "taskeig/kernels.hpp"
#include "taskeig/philox.hpp"
#include "taskeig/runtime.hpp"
#include "taskeig/window_tasks.hpp"

namespace taskeig {

namespace {

std::vector<Selection::Block> scan_blocks(const TiledMatrix& s) {
    const std::size_t n = s.rows();
    std::vector<Selection::Block> blocks;
    std::size_t i = 0;
    while (i < n) {
        Selection::Block b;
        b.start = i;
        if (i + 1 < n && s.at(i + 1, i) != 0.0) {
            b.size = 2;
            const double a = s.at(i, i);
            const double im = std::sqrt(std::fabs(s.at(i, i + 1))) *
                              std::sqrt(std::fabs(s.at(i + 1, i)));
            b.eigenvalue = {a, im};
            i += 2;
        } else {
            b.size = 1;
            b.eigenvalue = {s.at(i, i), 0.0};
            i += 1;
        }
        blocks.push_back(b);
    }
    return blocks;
}

} // namespace

std::size_t Selection::selected_rows() const {
    std::size_t r = 0;
    for (std::size_t i = 0; i < blocks.size(); ++i)
        if (flags[i]) r += blocks[i].size;
    return r;
}

Selection select_eigenvalues(const TiledMatrix& s,
                             const std::function<bool(std::complex<double>)>& pred) {
    Selection sel;
    sel.blocks = scan_blocks(s);
    for (const auto& b : sel.blocks) {
        const bool up = pred(b.eigenvalue);
        if (b.size == 2) {
            const bool down = pred(std::conj(b.eigenvalue));
            if (up != down)
                throw std::invalid_argument(
                    "selection predicate splits a conjugate pair");
        }
        sel.flags.push_back(up);
    }
    return sel;
}

Selection select_eigenvalues(const TiledMatrix& s, const std::vector<bool>& flags) {
    Selection sel;
    sel.blocks = scan_blocks(s);
    if (flags.size() != sel.blocks.size())
        throw std::invalid_argument("selection flag count must equal block count");
    sel.flags = flags;
    return sel;
}

Selection select_fraction(const TiledMatrix& s, double fraction, std::uint64_t seed) {
    if (fraction < 0.0 || fraction > 1.0)
        throw std::invalid_argument("selection fraction must be in [0, 1]");
    Selection sel;
    sel.blocks = scan_blocks(s);
    const std::size_t nb = sel.blocks.size();
    const auto want = static_cast<std::size_t>(fraction * static_cast<double>(nb));
    std::vector<std::size_t> idx(nb);
    for (std::size_t i = 0; i < nb; ++i) idx[i] = i;
    Philox rng(seed ^ 0x5e1ec7u);
    for (std::size_t i = 0; i < want && i + 1 < nb; ++i) {
        const std::size_t j = i + rng.bounded(nb - i);
        std::swap(idx[i], idx[j]);
    }
    sel.flags.assign(nb, false);
    for (std::size_t i = 0; i < want; ++i) sel.flags[idx[i]] = true;
    return sel;
}

Selection select_by_name(const TiledMatrix& s, const std::string& name,
                         std::size_t k) {
    if (name == "left-half-plane")
        return select_eigenvalues(
            s, [](std::complex<double> z) { return z.real() < 0.0; });
    if (name == "inside-unit-disk")
        return select_eigenvalues(
            s, [](std::complex<double> z) { return std::abs(z) < 1.0; });
    if (name == "largest-magnitude-k") {
        Selection sel;
        sel.blocks = scan_blocks(s);
        std::vector<std::size_t> idx(sel.blocks.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return std::abs(sel.blocks[a].eigenvalue) >
                   std::abs(sel.blocks[b].eigenvalue);
        });
        sel.flags.assign(sel.blocks.size(), false);
        for (std::size_t i = 0; i < std::min(k, idx.size()); ++i)
            sel.flags[idx[i]] = true;
        return sel;
    }
    throw std::invalid_argument("unknown selection predicate: " + name);
}

WindowReorderOutcome window_reorder(DenseMatrix& w,
                                    const std::vector<std::size_t>& block_sizes,
                                    const std::vector<bool>& selected,
                                    DenseMatrix& acc) {
    const std::size_t d = w.rows();
    WindowReorderOutcome out;
    acc = DenseMatrix::identity(d);

    // verify the expected block layout against the actual subdiagonal
    {
        std::size_t row = 0;
        for (std::size_t sz : block_sizes) {
            if (row + sz > d) {
                out.executed = false;
                return out;
            }
            if (sz == 2 && w(row + 1, row) == 0.0) {
                out.executed = false;
                return out;
            }
            if (row + sz < d && w(row + sz, row + sz - 1) != 0.0) {
                out.executed = false;
                return out;
            }
            row += sz;
        }
        if (row != d) {
            out.executed = false;
            return out;
        }
    }

    const std::size_t nb = block_sizes.size();
    out.stuck.assign(nb, false);
    // arrangement[i] = original local block index currently at slot i
    std::vector<std::size_t> arrangement(nb);
    for (std::size_t i = 0; i < nb; ++i) arrangement[i] = i;
    auto start_of_slot = [&](std::size_t slot) {
        std::size_t row = 0;
        for (std::size_t i = 0; i < slot; ++i) row += block_sizes[arrangement[i]];
        return row;
    };

    std::size_t dest = 0; // next free slot at the window top
    for (std::size_t blk = 0; blk < nb; ++blk) {
        if (!selected[blk]) continue;
        std::size_t slot = 0;
        while (arrangement[slot] != blk) ++slot;
        bool stuck = false;
        while (slot > dest) {
            const std::size_t pred = arrangement[slot - 1];
            const std::size_t row = start_of_slot(slot - 1);
            const auto st = kernels::swap_adjacent_blocks(
                w, acc, row, block_sizes[pred], block_sizes[blk]);
            if (st == kernels::SwapStatus::rejected) {
                stuck = true;
                break;
            }
            std::swap(arrangement[slot - 1], arrangement[slot]);
            --slot;
        }
        if (stuck) {
            out.stuck[blk] = true;
            dest = slot + 1; // later movers stack below, keeping their order
        } else {
            dest = slot + 1;
        }
    }
    out.order = arrangement;
    return out;
}

// ------------------------------------------------------------------ //

namespace {

struct BlockState {
    std::size_t size;
    bool selected;
    std::size_t orig;
};

struct RoundOutcome {
    WindowReorderOutcome win;
    std::shared_ptr<WindowAccumulator> acc;
    std::size_t first_block; // driver bookkeeping: slice [first_block, first_block+count)
    std::size_t count;
};

} // namespace

ReorderResult reorder_schur(TiledMatrix s_in, std::optional<TiledMatrix> q_in,
                            const Selection& sel, const ReorderOptions& opts) {
    ReorderResult out{std::move(s_in), std::move(q_in), {}, {}, {}, true};
    TiledMatrix& s = out.s;
    TiledMatrix* q = out.q ? &*out.q : nullptr;
    const std::size_t n = s.rows();
    const std::size_t ws = std::max<std::size_t>(
        opts.window_size ? opts.window_size : s.tile_size(), 8);
    const std::size_t workers = opts.workers ? opts.workers : default_workers();

    if (sel.blocks.size() != sel.flags.size())
        throw std::invalid_argument("reorder_schur: malformed selection");

    std::vector<BlockState> blocks;
    {
        std::size_t row = 0;
        for (std::size_t i = 0; i < sel.blocks.size(); ++i) {
            if (sel.blocks[i].start != row)
                throw std::invalid_argument("reorder_schur: selection does not match s");
            blocks.push_back(BlockState{sel.blocks[i].size, sel.flags[i], i});
            row += sel.blocks[i].size;
        }
        if (row != n)
            throw std::invalid_argument("reorder_schur: selection does not match s");
    }

    std::size_t target_block = 0; // finalized prefix, in block slots
    for (;;) {
        // skip selected blocks already in place
        while (target_block < blocks.size() && blocks[target_block].selected)
            ++target_block;
        // next selected block below the finalized prefix
        std::size_t fs = target_block;
        while (fs < blocks.size() && !blocks[fs].selected) ++fs;
        if (fs == blocks.size()) break;

        // rows of the finalized prefix and positions
        std::vector<std::size_t> starts(blocks.size() + 1, 0);
        for (std::size_t i = 0; i < blocks.size(); ++i)
            starts[i + 1] = starts[i] + blocks[i].size;
        const std::size_t target_row = starts[target_block];

        // group: selected blocks from fs downward fitting half a window and
        // spanning at most one window
        std::vector<std::size_t> group{fs};
        std::size_t grows = blocks[fs].size;
        for (std::size_t g = fs + 1; g < blocks.size(); ++g) {
            if (!blocks[g].selected) continue;
            const std::size_t span = starts[g + 1] - starts[group.front()];
            if (grows + blocks[g].size > ws / 2 || span > ws) break;
            group.push_back(g);
            grows += blocks[g].size;
        }

        // plan the window chain assuming every swap succeeds; the kernels
        // no-op on mismatch and the driver replans
        struct PlannedWindow {
            std::size_t wtop, wbot;
            std::vector<std::size_t> sizes;
            std::vector<bool> selected;
            std::size_t first_block, count;
        };
        std::vector<PlannedWindow> planned;
        {
            // simulated state: the group occupies its original slots first
            auto sim = blocks;
            std::size_t sim_target = target_block;
            for (;;) {
                std::vector<std::size_t> sstarts(sim.size() + 1, 0);
                for (std::size_t i = 0; i < sim.size(); ++i)
                    sstarts[i + 1] = sstarts[i] + sim[i].size;
                // find current group position (first selected at/after target)
                std::size_t gfirst = sim_target;
                while (gfirst < sim.size() && !sim[gfirst].selected) ++gfirst;
                std::size_t glast = gfirst;
                std::size_t found = sim[gfirst].selected ? 1 : 0;
                while (found < group.size()) {
                    ++glast;
                    if (sim[glast].selected) ++found;
                }
                if (gfirst == sim_target) break; // in place
                const std::size_t gtop = sstarts[gfirst];
                const std::size_t gbot = sstarts[glast + 1];
                std::size_t wtop =
                    std::max(sstarts[sim_target], (gbot > ws) ? gbot - ws : 0);
                // snap up to a block boundary so no 2x2 block is cut
                std::size_t bfirst = sim_target;
                while (sstarts[bfirst] < wtop) ++bfirst;
                wtop = sstarts[bfirst];
                PlannedWindow pw;
                pw.wtop = wtop;
                pw.wbot = gbot;
                pw.first_block = bfirst;
                pw.count = glast - bfirst + 1;
                for (std::size_t i = bfirst; i <= glast; ++i) {
                    pw.sizes.push_back(sim[i].size);
                    pw.selected.push_back(sim[i].selected);
                }
                planned.push_back(pw);
                // simulate: selected inside move to window top preserving order
                std::vector<BlockState> packed, rest;
                for (std::size_t i = bfirst; i <= glast; ++i)
                    (sim[i].selected ? packed : rest).push_back(sim[i]);
                std::size_t w_i = bfirst;
                for (const auto& b : packed) sim[w_i++] = b;
                for (const auto& b : rest) sim[w_i++] = b;
                if (wtop == sstarts[sim_target]) break;
                (void)gtop;
            }
        }
        if (planned.empty()) continue;

        // window straddling guard: wtop may land inside a 2x2 block; planning
        // starts windows only at block boundaries by construction above.

        TaskGraph graph;
        graph.register_matrix(s);
        if (q) graph.register_matrix(*q);
        std::vector<std::shared_ptr<RoundOutcome>> outcomes;
        TiledMatrix* sp = &s;
        std::size_t widx = 0;
        for (const auto& pw : planned) {
            auto ro = std::make_shared<RoundOutcome>();
            ro->acc = std::make_shared<WindowAccumulator>();
            ro->acc->a = pw.wtop;
            ro->acc->b = pw.wbot;
            ro->first_block = pw.first_block;
            ro->count = pw.count;
            auto tiles = s.window_handles(pw.wtop, pw.wbot, pw.wtop, pw.wbot);
            Task t;
            t.reads = tiles;
            t.writes = tiles;
            t.priority = kPriorityCritical;
            t.label = "reorder:W:" + std::to_string(widx);
            const auto sizes = pw.sizes;
            const auto selmask = pw.selected;
            const std::size_t a = pw.wtop, b = pw.wbot;
            t.kernel = [sp, ro, sizes, selmask, a, b](Scratch&) {
                DenseMatrix w;
                sp->gather(a, b, a, b, w);
                ro->win = window_reorder(w, sizes, selmask, ro->acc->q);
                if (ro->win.executed) sp->scatter(a, b, a, b, w);
            };
            graph.insert(std::move(t));
            insert_window_updates(graph, s, q, ro->acc, tiles,
                                  "reorder:W" + std::to_string(widx));
            outcomes.push_back(std::move(ro));
            ++widx;
        }
        graph.execute(workers, opts.seed);

        // fold the reported outcomes back into the block bookkeeping
        bool deviated = false;
        for (const auto& ro : outcomes) {
            out.plan.push_back(ReorderResult::PlanWindow{
                ro->acc->a, ro->acc->b - ro->acc->a, ro->count});
            if (!ro->win.executed) {
                deviated = true;
                break;
            }
            std::vector<BlockState> slice(blocks.begin() + ro->first_block,
                                          blocks.begin() + ro->first_block + ro->count);
            for (std::size_t i = 0; i < ro->count; ++i)
                blocks[ro->first_block + i] = slice[ro->win.order[i]];
            bool any_stuck = false;
            for (std::size_t i = 0; i < ro->count; ++i)
                if (ro->win.stuck[i]) {
                    any_stuck = true;
                    if (opts.strict)
                        throw std::runtime_error(
                            "reorder_schur: swap rejected in strict mode");
                    out.rejected_blocks.push_back(slice[i].orig);
                    out.clean = false;
                    // stop trying to move it
                    for (auto& b : blocks)
                        if (b.orig == slice[i].orig) b.selected = false;
                }
            if (any_stuck) {
                deviated = true;
                break;
            }
        }
        (void)deviated; // replanning happens naturally on the next pass
    }

    // permutation record: original block index -> final slot
    out.permutation.assign(blocks.size(), 0);
    for (std::size_t i = 0; i < blocks.size(); ++i) out.permutation[blocks[i].orig] = i;
    return out;
}

} // namespace taskeig
