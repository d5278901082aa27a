//
// taskeig -- task-based dense nonsymmetric eigensolver
//
// SPDX-License-Identifier: BSD-3-Clause
//
#include "taskeig/eigvec.hpp"

#include <cfloat>
#include <cmath>
#include <stdexcept>

#include "taskeig/kernels.hpp"
#include "taskeig/runtime.hpp"

namespace taskeig {

namespace {

/// Every tile write in this module must stay finite; that is the module's
/// contract, so the check is always on.
void assert_finite(const double* p, std::size_t n, const char* where) {
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(p[i]))
            throw std::runtime_error(std::string("non-finite value produced in ") +
                                     where);
}

std::int64_t clamp_exponent(std::int64_t e) {
    return std::max(e, ScalingFactor::kMinExponent);
}

/// Exact power-of-two column rescale (stored *= 2^delta, exponent += delta).
void rescale_column(double* col, std::size_t len, std::int64_t& exponent,
                    std::int64_t delta) {
    if (delta == 0) return;
    const double f = std::ldexp(1.0, static_cast<int>(delta));
    for (std::size_t i = 0; i < len; ++i) col[i] *= f;
    exponent = clamp_exponent(exponent + delta);
}

double col_inf(const double* col, std::size_t len) {
    return blas::norm_inf(len, col);
}

} // namespace

void protect_update(AugmentedTile& x, AugmentedTile& y, const DenseMatrix& t,
                    bool protection) {
    if (x.data.cols() != y.data.cols())
        throw std::invalid_argument("protect_update: column count mismatch");
    const std::size_t k = x.data.cols();
    const std::size_t xr = x.data.rows(), yr = y.data.rows();
    const double tnorm = norm_inf(t);
    for (std::size_t j = 0; j < k; ++j) {
        // consistent scaling of the pair: unify to the minimum exponent
        const std::int64_t e = std::min(x.exponents[j], y.exponents[j]);
        rescale_column(x.data.col(j), xr, x.exponents[j], e - x.exponents[j]);
        rescale_column(y.data.col(j), yr, y.exponents[j], e - y.exponents[j]);
        if (!protection) continue;
        // growth guard, evaluated in exponent space first so the bound itself
        // cannot overflow
        for (;;) {
            const double xn = col_inf(x.data.col(j), xr);
            const double yn = col_inf(y.data.col(j), yr);
            std::int64_t over = 0;
            if (tnorm != 0.0 && xn != 0.0) {
                const int pe = std::ilogb(tnorm) + std::ilogb(xn);
                if (pe > 1018) over = pe - 1018;
            }
            if (over == 0) {
                if (yn + tnorm * xn <= kOmega) break;
                over = 8;
            }
            rescale_column(x.data.col(j), xr, x.exponents[j], -over);
            rescale_column(y.data.col(j), yr, y.exponents[j], -over);
        }
    }
}

void linear_update(const AugmentedTile& x, AugmentedTile& y, const DenseMatrix& t,
                   bool protection) {
    auto& xm = const_cast<AugmentedTile&>(x); // consistent scaling touches both
    protect_update(xm, y, t, protection);
    blas::gemm(false, false, y.data.rows(), y.data.cols(), x.data.rows(), -1.0,
               t.data(), t.rows(), x.data.data(), x.data.rows(), y.data.data(),
               y.data.rows());
    assert_finite(y.data.data(), y.data.rows() * y.data.cols(), "linear_update");
}

ConsistentScalingOutcome consistent_scaling(std::span<SegmentRef> segments) {
    ConsistentScalingOutcome out;
    if (segments.empty()) return out;
    std::int64_t emin = segments[0].exponent;
    for (const auto& s : segments) emin = std::min(emin, s.exponent);
    out.exponent = emin;
    for (auto& s : segments) {
        const std::int64_t delta = emin - s.exponent;
        if (delta == 0) continue;
        const double f = std::ldexp(1.0, static_cast<int>(delta));
        for (std::size_t i = 0; i < s.len; ++i) {
            const double v = s.data[i];
            if (v != 0.0 && std::fabs(v) * f < DBL_MIN) out.flagged = true;
            s.data[i] = v * f;
        }
        s.exponent = emin;
    }
    return out;
}

// ------------------------------------------------------------------ //

namespace {

struct Group {
    std::size_t tile = 0;    // diagonal tile row holding the block ends
    std::size_t tile_lo = 0; // may be tile-1 when a 2x2 block straddles
    std::vector<std::size_t> positions; // block start per column
    std::vector<std::complex<double>> lambdas;
    std::vector<int> kinds; // 0 real, 1 re, 2 im
};

/// Per-group workspace: the segments live in a TiledMatrix for dependency
/// tracking, the exponents ride alongside (written only by the owning task).
struct GroupWork {
    std::unique_ptr<TiledMatrix> x, rhs;
    std::vector<std::vector<std::int64_t>> xexp, rexp; // [tile row][column]
    std::vector<bool> flagged;
    Group g;
};

/// Initial segment on the diagonal tile: unit entry (real) or the 2x2 block
/// eigenvector (pair), then protected backsubstitution for the rows above
/// inside the same tile.
void init_diagonal_tile(const TiledMatrix& s, GroupWork& gw, bool protection) {
    const std::size_t r0 = s.tile_row_begin(gw.g.tile_lo);
    const std::size_t r1 = s.tile_row_end(gw.g.tile);
    const std::size_t len = r1 - r0;
    DenseMatrix tl;
    s.gather(r0, r1, r0, r1, tl);
    DenseMatrix xt(len, gw.g.lambdas.size());
    for (std::size_t j = 0; j < gw.g.lambdas.size(); ++j) {
        if (gw.g.kinds[j] == 2) continue; // written with the leader column
        const std::size_t p = gw.g.positions[j] - r0;
        std::int64_t e = 0;
        bool flag = false;
        if (gw.g.kinds[j] == 0) {
            xt(p, j) = 1.0;
            // rhs for the rows above: -T(0:p, p)
            for (std::size_t i = 0; i < p; ++i) xt(i, j) = -tl(i, p);
            auto res = kernels::protected_small_solve(
                tl, gw.g.lambdas[j].real(), 0.0, xt.col(j), nullptr, p);
            if (!protection && res.scale_exponent != 0)
                throw std::runtime_error("unprotected solve required scaling");
            e = res.scale_exponent;
            flag = res.perturbed_pivot;
            xt(p, j) = std::ldexp(1.0, static_cast<int>(e));
        } else {
            // standardized block [[a, b], [c, a]]: eigenvector (b, i*beta)
            const double b = tl(p, p + 1);
            const double beta = std::sqrt(std::fabs(tl(p, p + 1))) *
                                std::sqrt(std::fabs(tl(p + 1, p)));
            const double scale = 1.0 / std::fmax(std::fabs(b), beta);
            const double vre = b * scale, vim = beta * scale;
            xt(p, j) = vre;
            xt(p + 1, j + 1) = vim;
            for (std::size_t i = 0; i < p; ++i) {
                xt(i, j) = -tl(i, p) * vre;
                xt(i, j + 1) = -tl(i, p + 1) * vim;
            }
            auto res = kernels::protected_small_solve(tl, gw.g.lambdas[j].real(),
                                                      gw.g.lambdas[j].imag(),
                                                      xt.col(j), xt.col(j + 1), p);
            e = res.scale_exponent;
            flag = res.perturbed_pivot;
            const double f = std::ldexp(1.0, static_cast<int>(e));
            xt(p, j) = vre * f;
            xt(p + 1, j + 1) = vim * f;
        }
        for (std::size_t ti = gw.g.tile_lo; ti <= gw.g.tile; ++ti) {
            gw.xexp[ti][j] = e;
            if (gw.g.kinds[j] == 1) gw.xexp[ti][j + 1] = e;
        }
        gw.flagged[j] = gw.flagged[j] || flag;
        if (gw.g.kinds[j] == 1) gw.flagged[j + 1] = gw.flagged[j + 1] || flag;
    }
    assert_finite(xt.data(), len * gw.g.lambdas.size(), "init_diagonal_tile");
    gw.x->scatter(r0, r1, 0, gw.g.lambdas.size(), xt);
}

/// rhs[ti] -= S(ti, tj) * x[tj] over augmented columns.
void update_tile(const TiledMatrix& s, GroupWork& gw, std::size_t ti, std::size_t tj,
                 bool protection) {
    const std::size_t r0 = s.tile_row_begin(ti), r1 = s.tile_row_end(ti);
    const std::size_t c0 = s.tile_row_begin(tj), c1 = s.tile_row_end(tj);
    const std::size_t k = gw.g.lambdas.size();
    DenseMatrix t;
    s.gather(r0, r1, c0, c1, t);
    AugmentedTile xt(c1 - c0, k), yt(r1 - r0, k);
    gw.x->gather(c0, c1, 0, k, xt.data);
    gw.rhs->gather(r0, r1, 0, k, yt.data);
    xt.exponents = gw.xexp[tj];
    yt.exponents = gw.rexp[ti];
    // keep conjugate-pair columns on one shared exponent
    for (std::size_t j = 0; j < k; ++j)
        if (gw.g.kinds[j] == 1) {
            const std::int64_t e = std::min(xt.exponents[j], xt.exponents[j + 1]);
            xt.exponents[j] = xt.exponents[j + 1] = e;
            const std::int64_t ey = std::min(yt.exponents[j], yt.exponents[j + 1]);
            yt.exponents[j] = yt.exponents[j + 1] = ey;
        }
    linear_update(xt, yt, t, protection);
    for (std::size_t j = 0; j < k; ++j)
        if (gw.g.kinds[j] == 1 && yt.exponents[j] != yt.exponents[j + 1]) {
            const std::int64_t e = std::min(yt.exponents[j], yt.exponents[j + 1]);
            rescale_column(yt.data.col(j), r1 - r0, yt.exponents[j],
                           e - yt.exponents[j]);
            rescale_column(yt.data.col(j + 1), r1 - r0, yt.exponents[j + 1],
                           e - yt.exponents[j + 1]);
        }
    gw.rhs->scatter(r0, r1, 0, k, yt.data);
    gw.rexp[ti] = yt.exponents;
}

/// x[ti] = (S(ti,ti) - lambda_j I)^-1 rhs[ti] per column, protected.
void solve_tile(const TiledMatrix& s, GroupWork& gw, std::size_t ti,
                bool protection) {
    const std::size_t r0 = s.tile_row_begin(ti), r1 = s.tile_row_end(ti);
    const std::size_t len = r1 - r0;
    const std::size_t k = gw.g.lambdas.size();
    DenseMatrix tl;
    s.gather(r0, r1, r0, r1, tl);
    DenseMatrix xt(len, k);
    gw.rhs->gather(r0, r1, 0, k, xt);
    for (std::size_t j = 0; j < k; ++j) {
        if (gw.g.kinds[j] == 2) continue;
        std::int64_t e = gw.rexp[ti][j];
        bool flag = false;
        if (gw.g.kinds[j] == 0) {
            auto res = kernels::protected_small_solve(
                tl, gw.g.lambdas[j].real(), 0.0, xt.col(j), nullptr, len);
            e += res.scale_exponent;
            flag = res.perturbed_pivot;
        } else {
            auto res = kernels::protected_small_solve(tl, gw.g.lambdas[j].real(),
                                                      gw.g.lambdas[j].imag(),
                                                      xt.col(j), xt.col(j + 1), len);
            e += res.scale_exponent;
            flag = res.perturbed_pivot;
        }
        gw.xexp[ti][j] = clamp_exponent(e);
        if (gw.g.kinds[j] == 1) gw.xexp[ti][j + 1] = gw.xexp[ti][j];
        gw.flagged[j] = gw.flagged[j] || flag;
        if (gw.g.kinds[j] == 1) gw.flagged[j + 1] = gw.flagged[j + 1] || flag;
        (void)protection;
    }
    assert_finite(xt.data(), len * k, "solve_tile");
    gw.x->scatter(r0, r1, 0, k, xt);
}

/// Consistent scaling across tile rows, then normalization to unit infinity
/// norm with a deterministic sign (first maximal entry positive).
void finalize_group(const TiledMatrix& s, GroupWork& gw) {
    const std::size_t n = s.rows();
    const std::size_t k = gw.g.lambdas.size();
    DenseMatrix all;
    gw.x->gather(0, n, 0, k, all);
    for (std::size_t j = 0; j < k; ++j) {
        if (gw.g.kinds[j] == 2) continue;
        const std::size_t ncols = (gw.g.kinds[j] == 1) ? 2 : 1;
        const std::size_t last_tile = gw.g.tile;
        // segments across tile rows per column of the pair
        std::vector<SegmentRef> segs;
        for (std::size_t c = 0; c < ncols; ++c)
            for (std::size_t ti = 0; ti <= last_tile; ++ti) {
                const std::size_t r0 = s.tile_row_begin(ti), r1 = s.tile_row_end(ti);
                segs.push_back(SegmentRef{all.col(j + c) + r0, r1 - r0,
                                          gw.xexp[ti][j + c]});
            }
        auto cs = consistent_scaling(segs);
        if (cs.flagged) {
            gw.flagged[j] = true;
            if (ncols == 2) gw.flagged[j + 1] = true;
        }
        // normalization: the represented and stored vectors differ only by a
        // power of two, so normalizing the stored data suffices
        double nrm = 0.0;
        std::size_t arg = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double m = std::fabs(all(i, j));
            if (ncols == 2) m = std::fmax(m, std::fabs(all(i, j + 1)));
            if (m > nrm) {
                nrm = m;
                arg = i;
            }
        }
        if (nrm == 0.0) continue;
        double lead = all(arg, j);
        if (ncols == 2 && std::fabs(all(arg, j + 1)) > std::fabs(lead))
            lead = all(arg, j + 1);
        const double scale = (lead < 0.0 ? -1.0 : 1.0) / nrm;
        for (std::size_t c = 0; c < ncols; ++c)
            for (std::size_t i = 0; i < n; ++i) all(i, j + c) *= scale;
    }
    assert_finite(all.data(), n * k, "finalize_group");
    gw.x->scatter(0, n, 0, k, all);
    for (auto& row : gw.xexp) std::fill(row.begin(), row.end(), 0);
}

} // namespace

EigenvectorSet solve_eigenvectors(const TiledMatrix& s, const Selection& sel,
                                  const EigvecOptions& opts) {
    const std::size_t n = s.rows();
    if (sel.blocks.size() != sel.flags.size())
        throw std::invalid_argument("solve_eigenvectors: malformed selection");
    EigenvectorSet out;
    out.n = n;

    // group selected blocks by the diagonal tile holding them; a straddling
    // 2x2 block widens its group's diagonal span to two tiles
    std::vector<GroupWork> groups;
    for (std::size_t bi = 0; bi < sel.blocks.size(); ++bi) {
        if (!sel.flags[bi]) continue;
        const auto& b = sel.blocks[bi];
        const std::size_t key = s.tile_row_of(b.start + b.size - 1);
        if (groups.empty() || groups.back().g.tile != key) {
            groups.emplace_back();
            groups.back().g.tile = key;
            groups.back().g.tile_lo = key;
        }
        groups.back().g.tile_lo =
            std::min(groups.back().g.tile_lo, s.tile_row_of(b.start));
        auto& g = groups.back().g;
        if (b.size == 1) {
            g.positions.push_back(b.start);
            g.lambdas.push_back(b.eigenvalue);
            g.kinds.push_back(0);
        } else {
            g.positions.push_back(b.start);
            g.positions.push_back(b.start);
            g.lambdas.push_back(b.eigenvalue);
            g.lambdas.push_back(std::conj(b.eigenvalue));
            g.kinds.push_back(1);
            g.kinds.push_back(2);
        }
    }

    TaskGraph graph;
    // TiledMatrix registration requires stable addresses: allocate first
    for (auto& gw : groups) {
        const std::size_t k = gw.g.lambdas.size();
        gw.x = std::make_unique<TiledMatrix>(n, k, s.tile_size());
        gw.rhs = std::make_unique<TiledMatrix>(n, k, s.tile_size());
        gw.xexp.assign(s.grid_rows(), std::vector<std::int64_t>(k, 0));
        gw.rexp.assign(s.grid_rows(), std::vector<std::int64_t>(k, 0));
        gw.flagged.assign(k, false);
    }
    graph.register_matrix(s);
    for (auto& gw : groups) {
        graph.register_matrix(*gw.x);
        graph.register_matrix(*gw.rhs);
    }
    const bool prot = opts.protection;
    for (auto& gw : groups) {
        GroupWork* gp = &gw;
        const TiledMatrix* sp = &s;
        const std::size_t pb = gw.g.tile;
        const std::size_t plo = gw.g.tile_lo;
        const std::size_t k = gw.g.lambdas.size();
        {
            Task t;
            t.reads = s.window_handles(s.tile_row_begin(plo), s.tile_row_end(pb),
                                       s.tile_row_begin(plo), s.tile_row_end(pb));
            t.writes = gw.x->window_handles(s.tile_row_begin(plo), s.tile_row_end(pb),
                                            0, k);
            t.priority = kPriorityCritical;
            t.label = "evec:init:" + std::to_string(pb);
            t.kernel = [sp, gp, prot](Scratch&) { init_diagonal_tile(*sp, *gp, prot); };
            graph.insert(std::move(t));
        }
        for (std::size_t ti = plo; ti-- > 0;) {
            for (std::size_t tj = pb + 1; tj-- > ti + 1;) {
                Task t;
                t.reads = s.window_handles(s.tile_row_begin(ti), s.tile_row_end(ti),
                                           s.tile_row_begin(tj), s.tile_row_end(tj));
                auto xs = gw.x->window_handles(s.tile_row_begin(tj),
                                               s.tile_row_end(tj), 0, k);
                t.reads.insert(t.reads.end(), xs.begin(), xs.end());
                t.writes = gw.rhs->window_handles(s.tile_row_begin(ti),
                                                  s.tile_row_end(ti), 0, k);
                t.priority = kPriorityCritical;
                t.label = "evec:upd:" + std::to_string(ti) + ":" + std::to_string(tj);
                t.kernel = [sp, gp, ti, tj, prot](Scratch&) {
                    update_tile(*sp, *gp, ti, tj, prot);
                };
                graph.insert(std::move(t));
            }
            {
                Task t;
                t.reads = s.window_handles(s.tile_row_begin(ti), s.tile_row_end(ti),
                                           s.tile_row_begin(ti), s.tile_row_end(ti));
                auto rs = gw.rhs->window_handles(s.tile_row_begin(ti),
                                                 s.tile_row_end(ti), 0, k);
                t.reads.insert(t.reads.end(), rs.begin(), rs.end());
                t.writes = gw.x->window_handles(s.tile_row_begin(ti),
                                                s.tile_row_end(ti), 0, k);
                t.priority = kPriorityCritical;
                t.label = "evec:solve:" + std::to_string(ti);
                t.kernel = [sp, gp, ti, prot](Scratch&) {
                    solve_tile(*sp, *gp, ti, prot);
                };
                graph.insert(std::move(t));
            }
        }
        {
            Task t;
            t.reads = {};
            t.writes = gw.x->window_handles(0, n, 0, k);
            t.priority = kPriorityAccumulate;
            t.label = "evec:finalize:" + std::to_string(pb);
            t.kernel = [sp, gp](Scratch&) { finalize_group(*sp, *gp); };
            graph.insert(std::move(t));
        }
    }
    graph.execute(opts.workers ? opts.workers : default_workers(), opts.seed);

    // assemble the output set
    std::size_t total = 0;
    for (const auto& gw : groups) total += gw.g.lambdas.size();
    out.columns = DenseMatrix(n, total);
    std::size_t col = 0;
    for (const auto& gw : groups) {
        const std::size_t k = gw.g.lambdas.size();
        DenseMatrix block;
        gw.x->gather(0, n, 0, k, block);
        for (std::size_t j = 0; j < k; ++j) {
            for (std::size_t i = 0; i < n; ++i) out.columns(i, col) = block(i, j);
            out.lambdas.push_back(gw.g.lambdas[j]);
            out.col_kind.push_back(gw.g.kinds[j]);
            out.positions.push_back(gw.g.positions[j]);
            out.flagged.push_back(gw.flagged[j]);
            ++col;
        }
    }
    return out;
}

EigenvectorSet backtransform(const EigenvectorSet& y, const TiledMatrix& q,
                             const EigvecOptions& opts) {
    const std::size_t n = y.n;
    if (q.rows() != n || q.cols() != n)
        throw std::invalid_argument("backtransform: dimension mismatch");
    const std::size_t k = y.lambdas.size();
    EigenvectorSet out = y;
    if (k == 0) return out;

    TiledMatrix yt(n, std::max<std::size_t>(k, 1), q.tile_size());
    TiledMatrix xt(n, std::max<std::size_t>(k, 1), q.tile_size());
    {
        DenseMatrix tmp = y.columns;
        yt.scatter(0, n, 0, k, tmp);
    }
    TaskGraph graph;
    graph.register_matrix(q);
    graph.register_matrix(yt);
    graph.register_matrix(xt);
    const TiledMatrix* qp = &q;
    TiledMatrix* ytp = &yt;
    TiledMatrix* xtp = &xt;
    for (std::size_t ti = 0; ti < q.grid_rows(); ++ti) {
        const std::size_t r0 = q.tile_row_begin(ti), r1 = q.tile_row_end(ti);
        Task t;
        t.reads = q.window_handles(r0, r1, 0, n);
        auto ys = yt.window_handles(0, n, 0, k);
        t.reads.insert(t.reads.end(), ys.begin(), ys.end());
        t.writes = xt.window_handles(r0, r1, 0, k);
        t.priority = kPriorityCritical;
        t.label = "evec:bt:" + std::to_string(ti);
        t.kernel = [qp, ytp, xtp, r0, r1, n, k](Scratch&) {
            DenseMatrix qrow, yall, res(r1 - r0, k);
            qp->gather(r0, r1, 0, n, qrow);
            ytp->gather(0, n, 0, k, yall);
            blas::gemm(false, false, r1 - r0, k, n, 1.0, qrow.data(), r1 - r0,
                       yall.data(), n, res.data(), r1 - r0);
            assert_finite(res.data(), (r1 - r0) * k, "backtransform");
            xtp->scatter(r0, r1, 0, k, res);
        };
        graph.insert(std::move(t));
    }
    graph.execute(opts.workers ? opts.workers : default_workers(), opts.seed);

    xt.gather(0, n, 0, k, out.columns);
    // renormalize with the same deterministic convention
    for (std::size_t j = 0; j < k; ++j) {
        if (out.col_kind[j] == 2) continue;
        const std::size_t ncols = (out.col_kind[j] == 1) ? 2 : 1;
        double nrm = 0.0;
        std::size_t arg = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double m = std::fabs(out.columns(i, j));
            if (ncols == 2) m = std::fmax(m, std::fabs(out.columns(i, j + 1)));
            if (m > nrm) {
                nrm = m;
                arg = i;
            }
        }
        if (nrm == 0.0) continue;
        double lead = out.columns(arg, j);
        if (ncols == 2 && std::fabs(out.columns(arg, j + 1)) > std::fabs(lead))
            lead = out.columns(arg, j + 1);
        const double scale = (lead < 0.0 ? -1.0 : 1.0) / nrm;
        for (std::size_t c = 0; c < ncols; ++c)
            for (std::size_t i = 0; i < n; ++i) out.columns(i, j + c) *= scale;
    }
    return out;
}

} // namespace taskeig
