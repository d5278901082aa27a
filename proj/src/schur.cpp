//
// taskeig -- task-based dense nonsymmetric eigensolver
//
// SPDX-License-Identifier: BSD-3-Clause
//
#include "taskeig/schur.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <stdexcept>

#include "taskeig/kernels.hpp"
#include "taskeig/window_tasks.hpp"

namespace taskeig {

namespace {

constexpr double kEps = 2.220446049250313e-16;
constexpr double kSafeMin = DBL_MIN;



// ------------------------------------------------------------------ //
// dense helpers

/// First column of (H - s1)(H - s2) at the top of a window, scaled.
void shift_vector(const DenseMatrix& w, double ssum, double sprod, double v[3]) {
    const double a11 = w(0, 0), a12 = w(0, 1);
    const double a21 = w(1, 0), a22 = w(1, 1);
    const double a32 = (w.rows() > 2) ? w(2, 1) : 0.0;
    v[0] = a11 * a11 + a12 * a21 - ssum * a11 + sprod;
    v[1] = a21 * (a11 + a22 - ssum);
    v[2] = a21 * a32;
    const double vm =
        std::fmax(std::fabs(v[0]), std::fmax(std::fabs(v[1]), std::fabs(v[2])));
    if (vm != 0.0) {
        v[0] /= vm;
        v[1] /= vm;
        v[2] /= vm;
    }
}

/// One chase step of the bulge whose next reflector starts at global row r.
/// w spans global rows/cols [a, b); the active range ends at ihi. Returns the
/// new position; positions >= ihi-1 mean the bulge has left the matrix.
std::size_t chase_one_step(DenseMatrix& w, DenseMatrix& acc, std::size_t a,
                           std::size_t b, std::size_t ihi, std::size_t r) {
    const std::size_t d = b - a;
    const std::size_t len = std::min<std::size_t>(3, ihi - r);
    if (len < 2 || r + 1 >= ihi) return ihi - 1;
    const std::size_t ri = r - a;
    double col[3];
    for (std::size_t i = 0; i < len; ++i) col[i] = w(ri + i, ri - 1);
    auto [refl, beta] = kernels::make_reflector(std::span<const double>(col, len));
    w(ri, ri - 1) = beta;
    for (std::size_t i = 1; i < len; ++i) w(ri + i, ri - 1) = 0.0;
    kernels::apply_reflector_left(w, refl, ri, ri, d);
    kernels::apply_reflector_right(w, refl, ri, 0, std::min(ri + len + 1, d));
    kernels::apply_reflector_right(acc, refl, ri, 0, acc.rows());
    return r + 1;
}

/// Introduces one bulge at the top of the window (local row 0) from a shift
/// pair; the shift vector is virtual, no column is annihilated.
void introduce_one_bulge(DenseMatrix& w, DenseMatrix& acc, double ssum,
                         double sprod) {
    const std::size_t d = w.rows();
    double v[3];
    shift_vector(w, ssum, sprod, v);
    const std::size_t len = std::min<std::size_t>(3, d);
    auto [refl, beta] = kernels::make_reflector(std::span<const double>(v, len));
    (void)beta;
    kernels::apply_reflector_left(w, refl, 0, 0, d);
    kernels::apply_reflector_right(w, refl, 0, 0, std::min<std::size_t>(len + 1, d));
    kernels::apply_reflector_right(acc, refl, 0, 0, acc.rows());
}

/// Standardizes the 2x2 block at position p of a dense quasi-triangular
/// matrix, accumulating the rotation into acc (columns p, p+1).
void standardize_block_dense(DenseMatrix& s, DenseMatrix& acc, std::size_t p) {
    const std::size_t n = s.rows();
    auto std2 = kernels::standardize_2x2(s(p, p), s(p, p + 1), s(p + 1, p),
                                         s(p + 1, p + 1));
    kernels::GivensRotation g{std2.rotation.c, std2.rotation.s, p, p + 1};
    kernels::apply_givens_left(s, g, p + 2, n);
    kernels::apply_givens_right(s, g, 0, p);
    s(p, p) = std2.a;
    s(p, p + 1) = std2.b;
    s(p + 1, p) = std2.c;
    s(p + 1, p + 1) = std2.d;
    kernels::apply_givens_right(acc, g, 0, acc.rows());
}

/// Conjugate-closed, even-sized shift list of at most m_max entries.
std::vector<std::complex<double>> pick_shifts(
    const std::vector<std::complex<double>>& harvest, std::size_t m_max) {
    std::vector<std::complex<double>> out;
    std::vector<double> reals;
    for (std::size_t i = 0; i < harvest.size() && out.size() + 1 < m_max + 1; ++i) {
        const auto& z = harvest[i];
        if (z.imag() > 0.0) {
            if (out.size() + 2 <= m_max) {
                out.push_back(z);
                out.push_back(std::conj(z));
            }
        } else if (z.imag() == 0.0) {
            reals.push_back(z.real());
        }
    }
    for (std::size_t i = 0; i + 1 < reals.size() && out.size() + 2 <= m_max; i += 2) {
        out.emplace_back(reals[i], 0.0);
        out.emplace_back(reals[i + 1], 0.0);
    }
    return out;
}

std::size_t default_shift_count(std::size_t active) {
    std::size_t m = std::max<std::size_t>(4, (active / 16) & ~std::size_t{1});
    m = std::min<std::size_t>(m, 64);
    // the sweep must fit: 3*(m/2) + 2 <= active
    if (3 * (m / 2) + 2 > active) {
        const std::size_t nb = (active >= 6) ? (active - 2) / 3 : 1;
        m = std::max<std::size_t>(2, 2 * nb);
        m = std::min<std::size_t>(m, 64);
    }
    return m;
}

struct AedCore {
    DenseMatrix s;  // transformed window
    DenseMatrix qw; // window similarity
    std::size_t deflated = 0;
    std::vector<std::complex<double>> shifts;
    double newbeta = 0.0;
    bool spike_eliminated = false;
    bool converged = true;
    bool swap_rejected = false;
};

bool multishift_schur_dense(DenseMatrix& h, DenseMatrix& q, const SchurOptions& opts,
                            int depth);

/// The complete AED decision procedure on a gathered window. beta is the
/// subdiagonal entry coupling the window to the rest of the active range.
AedCore aed_process_window(DenseMatrix win, double beta, const SchurOptions& opts,
                           int depth) {
    AedCore core;
    const std::size_t w = win.rows();
    const double window_fnorm = frobenius_norm(win);
    core.s = std::move(win);
    if (w <= opts.small_threshold || depth >= 8) {
        auto r = kernels::small_schur(core.s, core.qw);
        core.converged = r.converged;
    } else {
        core.qw = DenseMatrix::identity(w);
        core.converged = multishift_schur_dense(core.s, core.qw, opts, depth + 1);
    }
    if (!core.converged) return core;

    if (beta == 0.0) {
        core.deflated = w;
        core.newbeta = 0.0;
        core.spike_eliminated = true;
        return core;
    }

    // evaluate blocks bottom-up: [0, ktop) failed, [ktop, ns) unevaluated,
    // [ns, w) deflated
    std::size_t ktop = 0, ns = w;
    while (ns > ktop) {
        const std::size_t bsize = (ns >= 2 && ns - 2 >= ktop && core.s(ns - 1, ns - 2) != 0.0) ? 2 : 1;
        const std::size_t bs = ns - bsize;
        double spike_mag = 0.0, diag_sum = 0.0;
        for (std::size_t r = bs; r < ns; ++r) {
            spike_mag = std::fmax(spike_mag, std::fabs(beta * core.qw(0, r)));
            diag_sum += std::fabs(core.s(r, r));
        }
        if (deflation_check(spike_mag, diag_sum, opts.deflation, window_fnorm)) {
            ns = bs; // deflated in place at the bottom
        } else {
            // push the failed block to the upper left corner of the window
            std::size_t cur = bs;
            bool stuck = false;
            while (cur > ktop) {
                const std::size_t psize =
                    (cur >= 2 && cur - 2 >= ktop && core.s(cur - 1, cur - 2) != 0.0) ? 2 : 1;
                const std::size_t ps = cur - psize;
                if (kernels::swap_adjacent_blocks(core.s, core.qw, ps, psize, bsize) ==
                    kernels::SwapStatus::rejected) {
                    stuck = true;
                    break;
                }
                cur = ps;
            }
            if (stuck) {
                core.swap_rejected = true;
                break;
            }
            ktop += bsize;
        }
    }
    core.deflated = w - ns;

    // harvest shifts from everything that failed (or was never reached)
    for (std::size_t i = 0; i < ns;) {
        if (i + 1 < ns && core.s(i + 1, i) != 0.0) {
            const double a = core.s(i, i);
            const double b = core.s(i, i + 1), c = core.s(i + 1, i);
            const double im = std::sqrt(std::fabs(b)) * std::sqrt(std::fabs(c));
            core.shifts.emplace_back(a, im);
            core.shifts.emplace_back(a, -im);
            i += 2;
        } else {
            core.shifts.emplace_back(core.s(i, i), 0.0);
            i += 1;
        }
    }

    // eliminate the spike of the undeflated part and restore Hessenberg form
    if (ns == 0) {
        core.newbeta = 0.0;
    } else if (ns == 1) {
        core.newbeta = beta * core.qw(0, 0);
    } else {
        std::vector<double> spike(ns);
        for (std::size_t i = 0; i < ns; ++i) spike[i] = beta * core.qw(0, i);
        auto [refl, bnew] = kernels::make_reflector(spike);
        core.newbeta = bnew;
        kernels::apply_reflector_left(core.s, refl, 0, 0, w);
        kernels::apply_reflector_right(core.s, refl, 0, 0, ns);
        kernels::apply_reflector_right(core.qw, refl, 0, 0, w);
        for (std::size_t j = 0; j + 2 < ns; ++j) {
            std::vector<double> col(ns - j - 1);
            for (std::size_t i = j + 1; i < ns; ++i) col[i - j - 1] = core.s(i, j);
            auto [hr, hb] = kernels::make_reflector(col);
            if (hr.tau == 0.0) continue;
            core.s(j + 1, j) = hb;
            for (std::size_t i = j + 2; i < ns; ++i) core.s(i, j) = 0.0;
            kernels::apply_reflector_left(core.s, hr, j + 1, j + 1, w);
            kernels::apply_reflector_right(core.s, hr, j + 1, 0, ns);
            kernels::apply_reflector_right(core.qw, hr, j + 1, 0, w);
        }
    }
    core.spike_eliminated = true;
    return core;
}

/// Dense synchronous L/R/Q propagation of a window similarity (used by the
/// sequential recursion).
void apply_similarity_dense(DenseMatrix& h, DenseMatrix* q, std::size_t a,
                            std::size_t b, const DenseMatrix& acc) {
    const std::size_t n = h.rows(), d = b - a;
    if (b < n) {
        DenseMatrix g(d, n - b), gn(d, n - b);
        for (std::size_t j = 0; j < n - b; ++j)
            for (std::size_t i = 0; i < d; ++i) g(i, j) = h(a + i, b + j);
        blas::gemm(true, false, d, n - b, d, 1.0, acc.data(), d, g.data(), d,
                   gn.data(), d);
        for (std::size_t j = 0; j < n - b; ++j)
            for (std::size_t i = 0; i < d; ++i) h(a + i, b + j) = gn(i, j);
    }
    if (a > 0) {
        DenseMatrix g(a, d), gn(a, d);
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t i = 0; i < a; ++i) g(i, j) = h(i, a + j);
        blas::gemm(false, false, a, d, d, 1.0, g.data(), a, acc.data(), d, gn.data(), a);
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t i = 0; i < a; ++i) h(i, a + j) = gn(i, j);
    }
    if (q) {
        const std::size_t qr = q->rows();
        DenseMatrix g(qr, d), gn(qr, d);
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t i = 0; i < qr; ++i) g(i, j) = (*q)(i, a + j);
        blas::gemm(false, false, qr, d, d, 1.0, g.data(), qr, acc.data(), d,
                   gn.data(), qr);
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t i = 0; i < qr; ++i) (*q)(i, a + j) = gn(i, j);
    }
}

/// Negligible-subdiagonal scan on dense storage: finds the start of the
/// trailing unreduced block of [0, ihi), zeroing entries it deflates.
std::size_t scan_active_start_dense(DenseMatrix& h, std::size_t ihi, double hnorm) {
    const std::size_t n = h.rows();
    const double smlnum = kSafeMin * (static_cast<double>(n) / kEps);
    std::size_t l = ihi - 1;
    while (l > 0) {
        double tst = std::fabs(h(l - 1, l - 1)) + std::fabs(h(l, l));
        if (tst == 0.0) tst = hnorm;
        if (std::fabs(h(l, l - 1)) <= std::fmax(kEps * tst, smlnum)) {
            h(l, l - 1) = 0.0;
            break;
        }
        --l;
    }
    return l;
}

/// Sequential in-core multishift QR with AED; the recursion bottoms out in
/// small_schur. Used for AED windows above the small-problem threshold.
bool multishift_schur_dense(DenseMatrix& h, DenseMatrix& q, const SchurOptions& opts,
                            int depth) {
    const std::size_t n = h.rows();
    if (n <= 1) return true;
    double hnorm = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i <= std::min(j + 1, n - 1); ++i)
            hnorm = std::fmax(hnorm, std::fabs(h(i, j)));
    const std::size_t limit = 30 * n;
    std::size_t sweeps = 0, stagnation = 0;
    std::size_t ihi = n;
    while (ihi > 0) {
        if (ihi == 1) {
            ihi = 0;
            continue;
        }
        std::size_t l = scan_active_start_dense(h, ihi, hnorm);
        const std::size_t active = ihi - l;
        if (active == 1) {
            ihi = l;
            continue;
        }
        if (active == 2) {
            standardize_block_dense(h, q, l);
            ihi = l;
            continue;
        }
        if (active <= opts.small_threshold || depth >= 8) {
            DenseMatrix w(active, active), qw;
            for (std::size_t j = 0; j < active; ++j)
                for (std::size_t i = 0; i < active; ++i) w(i, j) = h(l + i, l + j);
            if (!kernels::small_schur(w, qw).converged) return false;
            for (std::size_t j = 0; j < active; ++j)
                for (std::size_t i = 0; i < active; ++i) h(l + i, l + j) = w(i, j);
            apply_similarity_dense(h, &q, l, ihi, qw);
            ihi = l;
            continue;
        }

        const std::size_t m = opts.shift_count ? opts.shift_count
                                               : default_shift_count(active);
        std::size_t w = opts.aed_window ? opts.aed_window : (3 * m) / 2;
        w = std::min(std::max<std::size_t>(w, 4), active);
        const std::size_t e = ihi - w;
        DenseMatrix win(w, w);
        for (std::size_t j = 0; j < w; ++j)
            for (std::size_t i = 0; i < w; ++i) win(i, j) = h(e + i, e + j);
        const double beta = (e > l) ? h(e, e - 1) : 0.0;
        auto core = aed_process_window(std::move(win), beta, opts, depth + 1);
        if (!core.converged) return false;
        for (std::size_t j = 0; j < w; ++j)
            for (std::size_t i = 0; i < w; ++i) h(e + i, e + j) = core.s(i, j);
        if (e > l) h(e, e - 1) = core.newbeta;
        apply_similarity_dense(h, &q, e, ihi, core.qw);
        stagnation = (core.deflated == 0) ? stagnation + 1 : 0;
        ihi -= core.deflated;
        if (core.deflated > 0 && 100 * core.deflated >= 14 * w) continue;
        if (ihi - l < 4) continue;

        auto shifts = pick_shifts(core.shifts, m);
        if (stagnation >= 6 || shifts.size() < 2) {
            const double sp = std::fabs(h(ihi - 1, ihi - 2)) +
                              ((ihi >= l + 3) ? std::fabs(h(ihi - 2, ihi - 3)) : 0.0);
            const double h11 = 0.75 * sp + h(ihi - 1, ihi - 1);
            auto ex = kernels::standardize_2x2(h11, -0.4375 * sp, sp, h11);
            shifts = {ex.lambda1, ex.lambda2};
            stagnation = 0;
        }
        if (++sweeps > limit) return false;

        const std::size_t nb = std::min(shifts.size() / 2, (ihi - l - 2) / 3);
        if (nb == 0) continue;
        const std::size_t activew = ihi - l;
        DenseMatrix win2(activew, activew), acc = DenseMatrix::identity(activew);
        for (std::size_t j = 0; j < activew; ++j)
            for (std::size_t i = 0; i < activew; ++i) win2(i, j) = h(l + i, l + j);
        std::vector<std::size_t> pos(nb);
        for (std::size_t j = 0; j < nb; ++j) {
            introduce_one_bulge(win2, acc,
                                (shifts[2 * j] + shifts[2 * j + 1]).real(),
                                (shifts[2 * j] * shifts[2 * j + 1]).real());
            std::size_t r = l + 1;
            const std::size_t target = l + 1 + 3 * (nb - 1 - j);
            while (r < target) r = chase_one_step(win2, acc, l, ihi, ihi, r);
            pos[j] = target;
        }
        for (std::size_t j = 0; j < nb; ++j) {
            std::size_t r = pos[j];
            while (r < ihi - 1) r = chase_one_step(win2, acc, l, ihi, ihi, r);
        }
        for (std::size_t j = 0; j < activew; ++j)
            for (std::size_t i = 0; i < activew; ++i) h(l + i, l + j) = win2(i, j);
        apply_similarity_dense(h, &q, l, ihi, acc);
    }
    return true;
}

} // namespace

// ------------------------------------------------------------------ //
// public operations

bool deflation_check(double spike_mag, double block_diag_abs_sum,
                     DeflationCondition cond, double window_frob_norm) {
    if (cond == DeflationCondition::classic)
        return spike_mag <= std::fmax(kEps * block_diag_abs_sum, kSafeMin);
    return spike_mag <= kEps * window_frob_norm;
}

namespace {

struct AedTaskState {
    AedCore core;
    std::shared_ptr<WindowAccumulator> acc;
};

/// Inserts the AED window task plus its off-window updates into graph.
std::shared_ptr<AedTaskState> insert_aed_tasks(TaskGraph& graph, TiledMatrix& h,
                                               TiledMatrix* q, std::size_t l,
                                               std::size_t ihi, std::size_t w,
                                               const SchurOptions& opts) {
    auto state = std::make_shared<AedTaskState>();
    const std::size_t e = ihi - w;
    state->acc = std::make_shared<WindowAccumulator>();
    state->acc->a = e;
    state->acc->b = ihi;

    auto tiles = h.window_handles(e, ihi, e, ihi);
    if (e > l) {
        auto spike_tiles = h.window_handles(e, e + 1, e - 1, e);
        tiles.insert(tiles.end(), spike_tiles.begin(), spike_tiles.end());
    }
    TiledMatrix* hp = &h;
    Task t;
    t.reads = tiles;
    t.writes = tiles;
    t.priority = kPriorityCritical;
    t.label = "schur:aed:" + std::to_string(e);
    t.kernel = [hp, state, l, e, ihi, w, opts](Scratch&) {
        DenseMatrix win;
        hp->gather(e, ihi, e, ihi, win);
        const double beta = (e > l) ? hp->at(e, e - 1) : 0.0;
        state->core = aed_process_window(std::move(win), beta, opts, 0);
        if (!state->core.converged) {
            state->acc->q = DenseMatrix::identity(w); // no-op updates
            return;
        }
        hp->scatter(e, ihi, e, ihi, state->core.s);
        if (e > l) hp->at(e, e - 1) = state->core.newbeta;
        state->acc->q = state->core.qw;
    };
    graph.insert(std::move(t));
    insert_window_updates(graph, h, q, state->acc, tiles,
                          "schur:aed:" + std::to_string(e));
    return state;
}

AedResult to_result(const AedCore& core, std::size_t w) {
    AedResult r;
    r.window = w;
    r.deflated = core.deflated;
    r.shifts = core.shifts;
    r.spike_eliminated = core.spike_eliminated;
    r.converged = core.converged;
    r.swap_rejected = core.swap_rejected;
    return r;
}

struct SweepPlan {
    struct Window {
        std::size_t a, b;
        std::vector<std::size_t> positions; // entering positions, bottom first
        bool final = false;
        std::size_t hop = 0;
    };
    std::vector<Window> windows;
};

/// Precomputes the chase windows for a chain of bulges entering at
/// `positions` (bottom first) on the active range [l, ihi).
SweepPlan plan_chase(std::vector<std::size_t> positions, std::size_t ihi,
                     std::size_t cw) {
    SweepPlan plan;
    while (!positions.empty()) {
        const std::size_t p_top = positions.back();
        const std::size_t p_bot = positions.front();
        const std::size_t a = p_top - 1;
        const std::size_t b = std::min(a + cw, ihi);
        SweepPlan::Window win{a, b, positions, b == ihi, 0};
        if (win.final) {
            plan.windows.push_back(std::move(win));
            positions.clear();
        } else {
            win.hop = (b >= p_bot + 4) ? (b - 4 - p_bot) : 0;
            if (win.hop == 0)
                throw std::logic_error("chase window too small for the chain");
            for (auto& p : positions) p += win.hop;
            plan.windows.push_back(std::move(win));
        }
    }
    return plan;
}

void run_chase_window(TiledMatrix& h, const SweepPlan::Window& win,
                      std::size_t ihi, WindowAccumulator& acc) {
    DenseMatrix w;
    h.gather(win.a, win.b, win.a, win.b, w);
    acc.q = DenseMatrix::identity(win.b - win.a);
    // bottom-most bulge first
    for (std::size_t j = 0; j < win.positions.size(); ++j) {
        std::size_t r = win.positions[j];
        if (win.final) {
            while (r < ihi - 1) r = chase_one_step(w, acc.q, win.a, win.b, ihi, r);
        } else {
            for (std::size_t s = 0; s < win.hop; ++s)
                r = chase_one_step(w, acc.q, win.a, win.b, ihi, r);
        }
    }
    h.scatter(win.a, win.b, win.a, win.b, w);
}

/// Inserts a whole planned chase into the graph. Returns window task ids.
std::vector<std::size_t> insert_chase_tasks(TaskGraph& graph, TiledMatrix& h,
                                            TiledMatrix* q, const SweepPlan& plan,
                                            std::size_t ihi, const std::string& tag) {
    TiledMatrix* hp = &h;
    std::vector<std::size_t> ids;
    std::size_t widx = 0;
    for (const auto& win : plan.windows) {
        auto acc = std::make_shared<WindowAccumulator>();
        acc->a = win.a;
        acc->b = win.b;
        auto tiles = h.window_handles(win.a, win.b, win.a, win.b);
        Task t;
        t.reads = tiles;
        t.writes = tiles;
        t.priority = kPriorityCritical;
        t.label = tag + ":W:" + std::to_string(widx);
        const SweepPlan::Window wcopy = win;
        t.kernel = [hp, wcopy, ihi, acc](Scratch&) {
            run_chase_window(*hp, wcopy, ihi, *acc);
        };
        ids.push_back(graph.insert(std::move(t)));
        insert_window_updates(graph, h, q, acc, tiles,
                              tag + ":W" + std::to_string(widx));
        ++widx;
    }
    return ids;
}

/// Window task for a small active block solved directly.
std::shared_ptr<WindowAccumulator> insert_small_solve_tasks(
    TaskGraph& graph, TiledMatrix& h, TiledMatrix* q, std::size_t l,
    std::size_t ihi, std::shared_ptr<bool> ok_flag) {
    auto acc = std::make_shared<WindowAccumulator>();
    acc->a = l;
    acc->b = ihi;
    auto tiles = h.window_handles(l, ihi, l, ihi);
    TiledMatrix* hp = &h;
    Task t;
    t.reads = tiles;
    t.writes = tiles;
    t.priority = kPriorityCritical;
    t.label = "schur:direct:" + std::to_string(l);
    t.kernel = [hp, l, ihi, acc, ok_flag](Scratch&) {
        DenseMatrix w;
        hp->gather(l, ihi, l, ihi, w);
        DenseMatrix qw;
        *ok_flag = kernels::small_schur(w, qw).converged;
        hp->scatter(l, ihi, l, ihi, w);
        acc->q = std::move(qw);
    };
    graph.insert(std::move(t));
    insert_window_updates(graph, h, q, acc, tiles, "schur:direct");
    return acc;
}

std::size_t scan_active_start_tiled(TiledMatrix& h, std::size_t ihi, double hnorm) {
    const std::size_t n = h.rows();
    const double smlnum = kSafeMin * (static_cast<double>(n) / kEps);
    std::size_t l = ihi - 1;
    while (l > 0) {
        double tst = std::fabs(h.at(l - 1, l - 1)) + std::fabs(h.at(l, l));
        if (tst == 0.0) tst = hnorm;
        if (std::fabs(h.at(l, l - 1)) <= std::fmax(kEps * tst, smlnum)) {
            h.at(l, l - 1) = 0.0;
            break;
        }
        --l;
    }
    return l;
}

} // namespace

AedResult aed_step(TiledMatrix& h, TiledMatrix* q, std::size_t l, std::size_t ihi,
                   std::size_t window, const SchurOptions& opts) {
    if (window < 4) throw std::invalid_argument("aed_step: window must be >= 4");
    window = std::min(window, ihi - l);
    TaskGraph graph;
    graph.register_matrix(h);
    if (q) graph.register_matrix(*q);
    auto state = insert_aed_tasks(graph, h, q, l, ihi, window, opts);
    graph.execute(opts.workers ? opts.workers : default_workers(), opts.seed);
    return to_result(state->core, window);
}

BulgeChain introduce_bulges(TiledMatrix& h, TiledMatrix* q, std::size_t l,
                            std::size_t ihi,
                            const std::vector<std::complex<double>>& shifts) {
    if (shifts.size() < 2)
        throw std::invalid_argument("introduce_bulges: need at least two shifts");
    if (shifts.size() % 2 != 0)
        throw std::invalid_argument("introduce_bulges: shifts must come in pairs");
    for (std::size_t j = 0; j + 1 < shifts.size(); j += 2) {
        const auto s1 = shifts[j], s2 = shifts[j + 1];
        if (s1.imag() != 0.0 &&
            (s1.real() != s2.real() || s1.imag() != -s2.imag()))
            throw std::invalid_argument("introduce_bulges: shift pair not conjugate");
    }
    const std::size_t nb = shifts.size() / 2;
    if (l + 3 * nb + 2 > ihi)
        throw std::invalid_argument("introduce_bulges: too many shifts for range");

    const std::size_t wi = std::min(l + 3 * nb + 2, ihi);
    DenseMatrix w;
    h.gather(l, wi, l, wi, w);
    WindowAccumulator acc{l, wi, DenseMatrix::identity(wi - l)};
    BulgeChain chain;
    chain.chain_begin = l;
    chain.chain_end = ihi;
    chain.shifts_used = shifts.size();
    for (std::size_t j = 0; j < nb; ++j) {
        introduce_one_bulge(w, acc.q, (shifts[2 * j] + shifts[2 * j + 1]).real(),
                            (shifts[2 * j] * shifts[2 * j + 1]).real());
        std::size_t r = l + 1;
        const std::size_t target = l + 1 + 3 * (nb - 1 - j);
        while (r < target) r = chase_one_step(w, acc.q, l, wi, ihi, r);
        chain.positions.push_back(target);
    }
    std::sort(chain.positions.rbegin(), chain.positions.rend());
    h.scatter(l, wi, l, wi, w);
    apply_window_updates(h, q, acc);
    return chain;
}

void chase_bulges(TiledMatrix& h, TiledMatrix* q, BulgeChain& chain,
                  std::size_t window_size, const SchurOptions& opts,
                  ChaseTrace* trace) {
    if (chain.positions.empty()) return;
    const std::size_t nb = chain.positions.size();
    const std::size_t cw = std::max(window_size, 3 * nb + 6);
    auto plan = plan_chase(chain.positions, chain.chain_end, cw);
    TaskGraph graph;
    graph.register_matrix(h);
    if (q) graph.register_matrix(*q);
    auto ids = insert_chase_tasks(graph, h, q, plan, chain.chain_end, "schur:chase");
    graph.execute(opts.workers ? opts.workers : default_workers(), opts.seed);
    if (trace) {
        trace->window_tasks = ids;
        trace->edges = graph.edges();
        for (std::size_t i = 0; i < graph.size(); ++i)
            trace->labels.push_back(graph.task(i).label);
    }
    chain.positions.clear();
}

SchurDecomposition schur_reduce(TiledMatrix h_in, std::optional<TiledMatrix> q_in,
                                const SchurOptions& opts) {
    const std::size_t n = h_in.rows();
    if (h_in.cols() != n)
        throw std::invalid_argument("schur_reduce: matrix must be square");
    SchurDecomposition out{std::move(h_in), std::move(q_in), {}, 0, true, 0, {}};
    TiledMatrix& h = out.s;
    TiledMatrix* q = out.q ? &*out.q : nullptr;
    const std::size_t workers = opts.workers ? opts.workers : default_workers();
    const std::size_t limit = opts.iteration_limit ? opts.iteration_limit : 30 * n;

    double hnorm = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i <= std::min(j + 1, n - 1); ++i)
            hnorm = std::fmax(hnorm, std::fabs(h.at(i, j)));

    std::size_t ihi = n;
    std::size_t stagnation = 0;
    // a pending AED result computed at the tail of the previous merged round
    std::shared_ptr<AedTaskState> pending;
    std::size_t pending_window = 0;
    bool hard_fail = false;

    while (ihi > 0 && !hard_fail) {
        AedResult res;
        bool have_aed = false;
        std::size_t l = 0;

        if (pending) {
            res = to_result(pending->core, pending_window);
            pending.reset();
            have_aed = true;
            if (!res.converged) {
                // retry once at half window before giving up
                const std::size_t w2 = std::max<std::size_t>(4, res.window / 2);
                l = scan_active_start_tiled(h, ihi, hnorm);
                if (w2 < res.window && ihi - l >= w2) {
                    res = aed_step(h, q, l, ihi, w2, opts);
                }
                if (!res.converged) {
                    hard_fail = true;
                    break;
                }
            }
            ihi -= res.deflated;
            stagnation = (res.deflated == 0) ? stagnation + 1 : 0;
            if (ihi == 0) break;
        }

        l = scan_active_start_tiled(h, ihi, hnorm);
        std::size_t active = ihi - l;

        if (active == 1) {
            ihi = l;
            pending.reset();
            continue;
        }
        if (active == 2) {
            // standardize the trailing 2x2 block through a window round
            auto acc = std::make_shared<WindowAccumulator>();
            acc->a = l;
            acc->b = ihi;
            TaskGraph graph;
            graph.register_matrix(h);
            if (q) graph.register_matrix(*q);
            auto tiles = h.window_handles(l, ihi, l, ihi);
            TiledMatrix* hp = &h;
            Task t;
            t.reads = tiles;
            t.writes = tiles;
            t.priority = kPriorityCritical;
            t.label = "schur:std2:" + std::to_string(l);
            t.kernel = [hp, l, acc](Scratch&) {
                DenseMatrix w;
                hp->gather(l, l + 2, l, l + 2, w);
                DenseMatrix qw = DenseMatrix::identity(2);
                standardize_block_dense(w, qw, 0);
                hp->scatter(l, l + 2, l, l + 2, w);
                acc->q = std::move(qw);
            };
            graph.insert(std::move(t));
            insert_window_updates(graph, h, q, acc, tiles, "schur:std2");
            auto rep = graph.execute(workers, opts.seed);
            if (opts.keep_reports) out.round_reports.push_back(std::move(rep));
            ihi = l;
            continue;
        }
        if (active <= opts.small_threshold) {
            auto ok = std::make_shared<bool>(true);
            TaskGraph graph;
            graph.register_matrix(h);
            if (q) graph.register_matrix(*q);
            insert_small_solve_tasks(graph, h, q, l, ihi, ok);
            auto rep = graph.execute(workers, opts.seed);
            if (opts.keep_reports) out.round_reports.push_back(std::move(rep));
            if (!*ok) {
                hard_fail = true;
                break;
            }
            ihi = l;
            continue;
        }

        if (!have_aed) {
            const std::size_t m = opts.shift_count ? opts.shift_count
                                                   : default_shift_count(active);
            std::size_t w = opts.aed_window ? opts.aed_window : (3 * m) / 2;
            w = std::min(std::max<std::size_t>(w, 4), active);
            TaskGraph graph;
            graph.register_matrix(h);
            if (q) graph.register_matrix(*q);
            auto state = insert_aed_tasks(graph, h, q, l, ihi, w, opts);
            auto rep = graph.execute(workers, opts.seed);
            if (opts.keep_reports) out.round_reports.push_back(std::move(rep));
            res = to_result(state->core, w);
            if (!res.converged) {
                const std::size_t w2 = std::max<std::size_t>(4, w / 2);
                if (w2 < w) res = aed_step(h, q, l, ihi, w2, opts);
                if (!res.converged) {
                    hard_fail = true;
                    break;
                }
            }
            ihi -= res.deflated;
            stagnation = (res.deflated == 0) ? stagnation + 1 : 0;
            if (ihi == 0) break;
            l = scan_active_start_tiled(h, ihi, hnorm);
            active = ihi - l;
            if (active < 4) continue;
        }

        // enough deflation: go straight to another AED round
        if (res.deflated > 0 && 100 * res.deflated >= 14 * res.window) continue;
        if (active <= opts.small_threshold) continue;

        if (out.sweeps >= limit) {
            hard_fail = true;
            break;
        }
        ++out.sweeps;

        const std::size_t m_want = opts.shift_count ? opts.shift_count
                                                    : default_shift_count(active);
        auto shifts = pick_shifts(res.shifts, m_want);
        if (stagnation >= 6 || shifts.size() < 2) {
            const double sp =
                std::fabs(h.at(ihi - 1, ihi - 2)) +
                ((ihi >= l + 3) ? std::fabs(h.at(ihi - 2, ihi - 3)) : 0.0);
            const double h11 = 0.75 * sp + h.at(ihi - 1, ihi - 1);
            auto ex = kernels::standardize_2x2(h11, -0.4375 * sp, sp, h11);
            shifts = {ex.lambda1, ex.lambda2};
            stagnation = 0;
        }
        std::size_t nb = std::min(shifts.size() / 2, (active - 2) / 3);
        if (nb == 0) continue;
        shifts.resize(2 * nb);

        // merged round: intro window + chase windows + next AED
        TaskGraph graph;
        graph.register_matrix(h);
        if (q) graph.register_matrix(*q);

        // intro window task
        auto intro_acc = std::make_shared<WindowAccumulator>();
        const std::size_t wi = std::min(l + 3 * nb + 2, ihi);
        intro_acc->a = l;
        intro_acc->b = wi;
        std::vector<std::size_t> positions;
        for (std::size_t j = 0; j < nb; ++j)
            positions.push_back(l + 1 + 3 * (nb - 1 - j));
        std::sort(positions.rbegin(), positions.rend());
        {
            auto tiles = h.window_handles(l, wi, l, wi);
            TiledMatrix* hp = &h;
            Task t;
            t.reads = tiles;
            t.writes = tiles;
            t.priority = kPriorityCritical;
            t.label = "schur:intro:" + std::to_string(l);
            const auto sh = shifts;
            t.kernel = [hp, l, wi, ihi, nb, sh, intro_acc](Scratch&) {
                DenseMatrix w;
                hp->gather(l, wi, l, wi, w);
                intro_acc->q = DenseMatrix::identity(wi - l);
                for (std::size_t j = 0; j < nb; ++j) {
                    introduce_one_bulge(w, intro_acc->q,
                                        (sh[2 * j] + sh[2 * j + 1]).real(),
                                        (sh[2 * j] * sh[2 * j + 1]).real());
                    std::size_t r = l + 1;
                    const std::size_t target = l + 1 + 3 * (nb - 1 - j);
                    while (r < target) r = chase_one_step(w, intro_acc->q, l, wi, ihi, r);
                }
                hp->scatter(l, wi, l, wi, w);
            };
            graph.insert(std::move(t));
            insert_window_updates(graph, h, q, intro_acc, tiles, "schur:intro");
        }
        // chase windows
        const std::size_t cw = std::max<std::size_t>(h.tile_size(), 3 * nb + 6);
        auto plan = plan_chase(positions, ihi, cw);
        insert_chase_tasks(graph, h, q, plan, ihi, "schur:sweep");

        // merged trailing AED for the next round
        {
            const std::size_t m2 = opts.shift_count ? opts.shift_count
                                                    : default_shift_count(active);
            std::size_t w2 = opts.aed_window ? opts.aed_window : (3 * m2) / 2;
            w2 = std::min(std::max<std::size_t>(w2, 4), active);
            pending = insert_aed_tasks(graph, h, q, l, ihi, w2, opts);
            pending_window = w2;
        }
        auto rep = graph.execute(workers, opts.seed);
        if (opts.keep_reports) out.round_reports.push_back(std::move(rep));
    }

    out.converged = !hard_fail;
    out.converged_trailing = n - ihi;
    // eigenvalue read-off from the (partial) quasi-triangular matrix
    if (out.converged) {
        std::size_t i = 0;
        while (i < n) {
            if (i + 1 < n && h.at(i + 1, i) != 0.0) {
                const double a = h.at(i, i), b = h.at(i, i + 1);
                const double c = h.at(i + 1, i);
                const double im = std::sqrt(std::fabs(b)) * std::sqrt(std::fabs(c));
                out.eigenvalues.emplace_back(a, im);
                out.eigenvalues.emplace_back(a, -im);
                i += 2;
            } else {
                out.eigenvalues.emplace_back(h.at(i, i), 0.0);
                i += 1;
            }
        }
    }
    return out;
}

} // namespace taskeig
