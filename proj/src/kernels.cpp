//
// taskeig -- task-based dense nonsymmetric eigensolver
//
// SPDX-License-Identifier: BSD-3-Clause
//
#include "taskeig/kernels.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <stdexcept>

namespace taskeig::kernels {

namespace {
constexpr double kEps = 2.220446049250313e-16; // 2^-52
constexpr double kSafeMin = DBL_MIN;

double sign_of(double x) { return x >= 0.0 ? 1.0 : -1.0; }
} // namespace

// ---------------------------------------------------------------------- //

std::pair<Reflector, double> make_reflector(std::span<const double> x) {
    Reflector h;
    const std::size_t n = x.size();
    h.v.assign(n, 0.0);
    if (n == 0) return {h, 0.0};
    h.v[0] = 1.0;
    if (n == 1) {
        // nothing to annihilate
        return {h, x[0]};
    }
    const double alpha = x[0];
    const double tail = blas::nrm2(n - 1, x.data() + 1);
    if (tail == 0.0) {
        if (alpha == 0.0) return {h, 0.0}; // zero vector: tau = 0, beta = 0
        return {h, alpha};                 // already collapsed
    }
    double beta = -sign_of(alpha) * std::hypot(alpha, tail);
    // rescale if beta is tiny to keep v well formed
    int rescale = 0;
    double a = alpha, t = tail;
    std::vector<double> tl(x.begin() + 1, x.end());
    while (std::fabs(beta) < kSafeMin / kEps && rescale < 20) {
        const double big = 1.0 / (kSafeMin / kEps);
        for (auto& e : tl) e *= big;
        a *= big;
        t = blas::nrm2(tl.size(), tl.data());
        beta = -sign_of(a) * std::hypot(a, t);
        ++rescale;
    }
    h.tau = (beta - a) / beta;
    const double inv = 1.0 / (a - beta);
    for (std::size_t i = 1; i < n; ++i) h.v[i] = tl[i - 1] * inv;
    for (int r = 0; r < rescale; ++r) beta *= kSafeMin / kEps;
    return {h, beta};
}

void apply_reflector_left(DenseMatrix& a, const Reflector& h, std::size_t r0,
                          std::size_t c0, std::size_t c1) {
    if (h.tau == 0.0) return;
    const std::size_t m = h.v.size();
    for (std::size_t j = c0; j < c1; ++j) {
        double w = 0.0;
        for (std::size_t i = 0; i < m; ++i) w += h.v[i] * a(r0 + i, j);
        w *= h.tau;
        for (std::size_t i = 0; i < m; ++i) a(r0 + i, j) -= w * h.v[i];
    }
}

void apply_reflector_right(DenseMatrix& a, const Reflector& h, std::size_t c0,
                           std::size_t r0, std::size_t r1) {
    if (h.tau == 0.0) return;
    const std::size_t m = h.v.size();
    for (std::size_t i = r0; i < r1; ++i) {
        double w = 0.0;
        for (std::size_t j = 0; j < m; ++j) w += a(i, c0 + j) * h.v[j];
        w *= h.tau;
        for (std::size_t j = 0; j < m; ++j) a(i, c0 + j) -= w * h.v[j];
    }
}

// ---------------------------------------------------------------------- //

GivensRotation make_givens(double a, double b, std::size_t i, std::size_t j) {
    GivensRotation g;
    g.i = i;
    g.j = j;
    if (b == 0.0) {
        g.c = 1.0;
        g.s = 0.0;
    } else if (a == 0.0) {
        g.c = 0.0;
        g.s = 1.0;
    } else {
        const double r = std::hypot(a, b);
        g.c = a / r;
        g.s = b / r;
    }
    return g;
}

void apply_givens_left(DenseMatrix& a, const GivensRotation& g, std::size_t c0,
                       std::size_t c1) {
    for (std::size_t k = c0; k < c1; ++k) {
        const double x = a(g.i, k), y = a(g.j, k);
        a(g.i, k) = g.c * x + g.s * y;
        a(g.j, k) = -g.s * x + g.c * y;
    }
}

void apply_givens_right(DenseMatrix& a, const GivensRotation& g, std::size_t r0,
                        std::size_t r1) {
    for (std::size_t k = r0; k < r1; ++k) {
        const double x = a(k, g.i), y = a(k, g.j);
        a(k, g.i) = g.c * x + g.s * y;
        a(k, g.j) = -g.s * x + g.c * y;
    }
}

// ---------------------------------------------------------------------- //
// 2x2 standardization. The rotation convention is G = [cs -sn; sn cs] applied
// as a similarity G^T M G; compositions below keep that convention.

Standardized2x2 standardize_2x2(double a, double b, double c, double d) {
    Standardized2x2 out;
    double cs = 1.0, sn = 0.0;

    // exact power-of-two prescaling keeps the intermediate products finite
    const double mx = std::max(std::max(std::fabs(a), std::fabs(b)),
                               std::max(std::fabs(c), std::fabs(d)));
    int ex = 0;
    if (mx > 0.0 && (mx > 1e150 || mx < 1e-150)) {
        ex = std::ilogb(mx);
        const double sc = std::ldexp(1.0, -ex);
        a *= sc; b *= sc; c *= sc; d *= sc;
    }

    if (c == 0.0) {
        // already triangular
    } else if (b == 0.0) {
        // quarter turn swaps the triangle orientation
        cs = 0.0;
        sn = 1.0;
        const double ta = a;
        a = d;
        d = ta;
        b = -c;
        c = 0.0;
    } else if ((a - d) == 0.0 && sign_of(b) != sign_of(c)) {
        // equal diagonal, opposite off-diagonal signs: standard already
    } else {
        // rotate so the diagonal entries become equal
        const double p = 0.5 * (a - d);
        const double q = b + c;
        const double r2 = std::hypot(2.0 * p, q);
        const double sig = sign_of(q);
        const double cos2 = sig * q / r2;
        const double sin2 = -sig * 2.0 * p / r2;
        cs = std::sqrt(0.5 * (1.0 + cos2));
        sn = sin2 / (2.0 * cs);
        {
            const double aa = cs * a + sn * c, bb = cs * b + sn * d;
            const double cc = -sn * a + cs * c, dd = -sn * b + cs * d;
            a = aa * cs + bb * sn;
            b = -aa * sn + bb * cs;
            c = cc * cs + dd * sn;
            d = -cc * sn + dd * cs;
        }
        const double m = 0.5 * (a + d);
        a = m;
        d = m;

        if (c == 0.0) {
            // fell to triangular
        } else if (b == 0.0) {
            const double tc = cs;
            cs = -sn;
            sn = tc;
            b = -c;
            c = 0.0;
            // a == d == m stays
        } else if (sign_of(b) != sign_of(c)) {
            // complex pair, standardized
        } else {
            // real pair: rotate onto the eigenvector basis
            const double sab = std::sqrt(std::fabs(b));
            const double sac = std::sqrt(std::fabs(c));
            const double pp = sab * sac; // = sqrt(b c), both same sign
            const double tau = 1.0 / std::sqrt(std::fabs(b + c));
            const double cs1 = sab * tau;
            const double sn1 = sign_of(c) * sac * tau;
            a = m + pp;
            d = m - pp;
            b = b - c;
            c = 0.0;
            const double tc = cs * cs1 - sn * sn1;
            sn = cs * sn1 + sn * cs1;
            cs = tc;
        }
    }

    const double back = std::ldexp(1.0, ex);
    out.a = a * back;
    out.b = b * back;
    out.c = c * back;
    out.d = d * back;
    out.rotation = GivensRotation{cs, sn, 0, 1};
    if (c == 0.0) {
        out.lambda1 = {out.a, 0.0};
        out.lambda2 = {out.d, 0.0};
    } else {
        const double beta = std::sqrt(std::fabs(b)) * std::sqrt(std::fabs(c)) * back;
        out.lambda1 = {out.a, beta};
        out.lambda2 = {out.a, -beta};
    }
    return out;
}

// ---------------------------------------------------------------------- //

void small_hessenberg(DenseMatrix& m, DenseMatrix& q) {
    const std::size_t n = m.rows();
    q = DenseMatrix::identity(n);
    if (n < 3) return;
    std::vector<double> col;
    for (std::size_t j = 0; j + 2 < n; ++j) {
        col.assign(n - j - 1, 0.0);
        for (std::size_t i = j + 1; i < n; ++i) col[i - j - 1] = m(i, j);
        auto [h, beta] = make_reflector(col);
        if (h.tau == 0.0) continue;
        m(j + 1, j) = beta;
        for (std::size_t i = j + 2; i < n; ++i) m(i, j) = 0.0;
        apply_reflector_left(m, h, j + 1, j + 1, n);
        apply_reflector_right(m, h, j + 1, 0, n);
        apply_reflector_right(q, h, j + 1, 0, n);
    }
}

namespace {

/// Standardizes the 2x2 block at position p of h, updating the coupled rows,
/// columns and the accumulated q.
void standardize_block_at(DenseMatrix& h, DenseMatrix& q, std::size_t p) {
    const std::size_t n = h.rows();
    auto std2 = standardize_2x2(h(p, p), h(p, p + 1), h(p + 1, p), h(p + 1, p + 1));
    GivensRotation g{std2.rotation.c, std2.rotation.s, p, p + 1};
    apply_givens_left(h, g, p + 2, n);
    apply_givens_right(h, g, 0, p);
    h(p, p) = std2.a;
    h(p, p + 1) = std2.b;
    h(p + 1, p) = std2.c;
    h(p + 1, p + 1) = std2.d;
    apply_givens_right(q, g, 0, q.rows());
}

} // namespace

SmallSchurResult small_schur(DenseMatrix& h, DenseMatrix& q) {
    const std::size_t n = h.rows();
    q = DenseMatrix::identity(n);
    SmallSchurResult res;
    if (n <= 1) return res;

    double hnorm = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i <= std::min(j + 1, n - 1); ++i)
            hnorm = std::fmax(hnorm, std::fabs(h(i, j)));
    if (hnorm == 0.0) return res;
    const double smlnum = kSafeMin * (static_cast<double>(n) / kEps);
    const std::size_t max_sweeps = 30 * n;

    std::size_t ihi = n;
    std::size_t its = 0;
    while (ihi > 0) {
        if (ihi == 1) {
            ihi = 0;
            its = 0;
            continue;
        }
        // negligible-subdiagonal scan from the bottom of the active range
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
        if (l == ihi - 1) {
            ihi = l;
            its = 0;
            continue;
        }
        if (l == ihi - 2) {
            standardize_block_at(h, q, l);
            ihi = l;
            its = 0;
            continue;
        }

        ++its;
        ++res.sweeps;
        if (res.sweeps > max_sweeps) {
            res.converged = false;
            return res;
        }

        double s11, s12, s21, s22;
        if (its % 10 == 0) {
            // classical exceptional shift after stagnation
            const double sp = std::fabs(h(ihi - 1, ihi - 2)) +
                              ((ihi >= l + 3) ? std::fabs(h(ihi - 2, ihi - 3)) : 0.0);
            s11 = 0.75 * sp + h(ihi - 1, ihi - 1);
            s12 = -0.4375 * sp;
            s21 = sp;
            s22 = s11;
        } else {
            s11 = h(ihi - 2, ihi - 2);
            s12 = h(ihi - 2, ihi - 1);
            s21 = h(ihi - 1, ihi - 2);
            s22 = h(ihi - 1, ihi - 1);
        }
        const double shift_sum = s11 + s22;
        const double shift_prod = s11 * s22 - s12 * s21;

        double v[3];
        {
            const double a11 = h(l, l), a12 = h(l, l + 1);
            const double a21 = h(l + 1, l), a22 = h(l + 1, l + 1);
            const double a32 = h(l + 2, l + 1);
            v[0] = a11 * a11 + a12 * a21 - shift_sum * a11 + shift_prod;
            v[1] = a21 * (a11 + a22 - shift_sum);
            v[2] = a21 * a32;
            const double vm = std::fmax(std::fabs(v[0]),
                                        std::fmax(std::fabs(v[1]), std::fabs(v[2])));
            if (vm != 0.0) {
                v[0] /= vm;
                v[1] /= vm;
                v[2] /= vm;
            }
        }

        for (std::size_t i = l; i + 3 <= ihi; ++i) {
            double w[3];
            if (i == l) {
                w[0] = v[0];
                w[1] = v[1];
                w[2] = v[2];
            } else {
                w[0] = h(i, i - 1);
                w[1] = h(i + 1, i - 1);
                w[2] = h(i + 2, i - 1);
            }
            auto [refl, beta] = make_reflector(std::span<const double>(w, 3));
            if (i > l) {
                h(i, i - 1) = beta;
                h(i + 1, i - 1) = 0.0;
                h(i + 2, i - 1) = 0.0;
            }
            apply_reflector_left(h, refl, i, i, n);
            apply_reflector_right(h, refl, i, 0, std::min(i + 4, ihi));
            apply_reflector_right(q, refl, i, 0, n);
        }
        // trailing 2-element reflector finishes the sweep
        {
            const std::size_t i = ihi - 2;
            double w[2] = {h(i, i - 1), h(i + 1, i - 1)};
            auto [refl, beta] = make_reflector(std::span<const double>(w, 2));
            h(i, i - 1) = beta;
            h(i + 1, i - 1) = 0.0;
            apply_reflector_left(h, refl, i, i, n);
            apply_reflector_right(h, refl, i, 0, ihi);
            apply_reflector_right(q, refl, i, 0, n);
        }
    }
    return res;
}

std::vector<DiagBlock> scan_diag_blocks(const DenseMatrix& s) {
    const std::size_t n = s.rows();
    std::vector<DiagBlock> blocks;
    std::size_t i = 0;
    while (i < n) {
        if (i + 1 < n && s(i + 1, i) != 0.0) {
            DiagBlock b{i, 2, 0.0, 0.0};
            const double a = s(i, i), bb = s(i, i + 1);
            const double cc = s(i + 1, i), d = s(i + 1, i + 1);
            const double p = 0.5 * (a - d);
            const double disc = p * p + bb * cc;
            b.re = 0.5 * (a + d);
            if (disc < 0.0) {
                b.im = std::sqrt(-disc);
            } else {
                // unstandardized real pair; report the larger root first
                b.im = 0.0;
                b.re = 0.5 * (a + d) + sign_of(p) * std::sqrt(disc);
            }
            blocks.push_back(b);
            i += 2;
        } else {
            blocks.push_back(DiagBlock{i, 1, s(i, i), 0.0});
            i += 1;
        }
    }
    return blocks;
}

// ---------------------------------------------------------------------- //
// Adjacent block swap

namespace {

/// Complete-pivoting Gaussian elimination on a tiny system; returns the
/// reciprocal pivot-ratio estimate of conditioning.
bool solve_gecp(DenseMatrix m, std::vector<double>& rhs, double& rcond) {
    const std::size_t d = m.rows();
    std::vector<std::size_t> colperm(d);
    for (std::size_t i = 0; i < d; ++i) colperm[i] = i;
    double amax = 0.0, smin = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        std::size_t pi = k, pj = k;
        double pv = 0.0;
        for (std::size_t i = k; i < d; ++i)
            for (std::size_t j = k; j < d; ++j)
                if (std::fabs(m(i, j)) > pv) {
                    pv = std::fabs(m(i, j));
                    pi = i;
                    pj = j;
                }
        if (k == 0) amax = pv;
        smin = pv;
        if (pv == 0.0) {
            rcond = 0.0;
            return false;
        }
        if (pi != k) {
            for (std::size_t j = 0; j < d; ++j) std::swap(m(k, j), m(pi, j));
            std::swap(rhs[k], rhs[pi]);
        }
        if (pj != k) {
            for (std::size_t i = 0; i < d; ++i) std::swap(m(i, k), m(i, pj));
            std::swap(colperm[k], colperm[pj]);
        }
        for (std::size_t i = k + 1; i < d; ++i) {
            const double f = m(i, k) / m(k, k);
            m(i, k) = 0.0;
            for (std::size_t j = k + 1; j < d; ++j) m(i, j) -= f * m(k, j);
            rhs[i] -= f * rhs[k];
        }
    }
    std::vector<double> x(d);
    for (std::size_t kk = d; kk-- > 0;) {
        double acc = rhs[kk];
        for (std::size_t j = kk + 1; j < d; ++j) acc -= m(kk, j) * x[j];
        x[kk] = acc / m(kk, kk);
    }
    for (std::size_t i = 0; i < d; ++i) rhs[colperm[i]] = x[i];
    rcond = (amax > 0.0) ? smin / amax : 0.0;
    return true;
}

/// A X - X C = B for p x p A, q x q C; X overwrites nothing, returned flat
/// col-major in x. rcond reports the pivot-ratio estimate.
bool solve_small_sylvester(const DenseMatrix& a, const DenseMatrix& c,
                           const DenseMatrix& b, DenseMatrix& x, double& rcond) {
    const std::size_t p = a.rows(), q = c.rows();
    const std::size_t d = p * q;
    DenseMatrix k(d, d);
    for (std::size_t j = 0; j < q; ++j)
        for (std::size_t i = 0; i < p; ++i) {
            const std::size_t row = j * p + i;
            for (std::size_t l = 0; l < q; ++l)
                for (std::size_t kk = 0; kk < p; ++kk) {
                    const std::size_t col = l * p + kk;
                    double val = 0.0;
                    if (l == j) val += a(i, kk);
                    if (kk == i) val -= c(l, j);
                    k(row, col) = val;
                }
        }
    std::vector<double> rhs(d);
    for (std::size_t j = 0; j < q; ++j)
        for (std::size_t i = 0; i < p; ++i) rhs[j * p + i] = b(i, j);
    if (!solve_gecp(k, rhs, rcond)) return false;

    x = DenseMatrix(p, q);
    for (std::size_t j = 0; j < q; ++j)
        for (std::size_t i = 0; i < p; ++i) x(i, j) = rhs[j * p + i];

    // one refinement pass on the residual
    DenseMatrix r = b;
    blas::gemm(false, false, p, q, p, -1.0, a.data(), p, x.data(), p, r.data(), p);
    blas::gemm(false, false, p, q, q, 1.0, x.data(), p, c.data(), q, r.data(), p);
    std::vector<double> dr(d);
    for (std::size_t j = 0; j < q; ++j)
        for (std::size_t i = 0; i < p; ++i) dr[j * p + i] = r(i, j);
    double rc2;
    if (solve_gecp(k, dr, rc2))
        for (std::size_t j = 0; j < q; ++j)
            for (std::size_t i = 0; i < p; ++i) x(i, j) += dr[j * p + i];
    return true;
}

} // namespace

SwapStatus swap_adjacent_blocks(DenseMatrix& s, DenseMatrix& acc,
                                std::size_t pos, std::size_t p, std::size_t q) {
    const std::size_t n = s.rows();
    const std::size_t d = p + q;

    if (p == 1 && q == 1) {
        const double t11 = s(pos, pos), t12 = s(pos, pos + 1), t22 = s(pos + 1, pos + 1);
        GivensRotation g = make_givens(t12, t22 - t11, pos, pos + 1);
        if (t12 == 0.0 && t22 - t11 == 0.0) return SwapStatus::ok; // equal values: no-op
        apply_givens_left(s, g, pos + 2, n);
        apply_givens_right(s, g, 0, pos);
        s(pos, pos) = t22;
        s(pos + 1, pos + 1) = t11;
        s(pos + 1, pos) = 0.0;
        // t12 is exactly preserved by this similarity
        apply_givens_right(acc, g, 0, acc.rows());
        return SwapStatus::ok;
    }

    DenseMatrix a(p, p), c(q, q), b(p, q);
    for (std::size_t j = 0; j < p; ++j)
        for (std::size_t i = 0; i < p; ++i) a(i, j) = s(pos + i, pos + j);
    for (std::size_t j = 0; j < q; ++j)
        for (std::size_t i = 0; i < q; ++i) c(i, j) = s(pos + p + i, pos + p + j);
    for (std::size_t j = 0; j < q; ++j)
        for (std::size_t i = 0; i < p; ++i) b(i, j) = s(pos + i, pos + p + j);

    double rcond = 0.0;
    DenseMatrix x;
    if (!solve_small_sylvester(a, c, b, x, rcond)) return SwapStatus::rejected;
    if (rcond < std::pow(kEps, 0.75)) return SwapStatus::rejected;

    // orthonormal basis of [ -X ; I ] via Householder QR
    DenseMatrix z(d, q);
    for (std::size_t j = 0; j < q; ++j) {
        for (std::size_t i = 0; i < p; ++i) z(i, j) = -x(i, j);
        z(p + j, j) = 1.0;
    }
    std::vector<Reflector> refl(q);
    for (std::size_t j = 0; j < q; ++j) {
        std::vector<double> col(d - j);
        for (std::size_t i = j; i < d; ++i) col[i - j] = z(i, j);
        auto [hh, beta] = make_reflector(col);
        refl[j] = hh;
        z(j, j) = beta;
        for (std::size_t i = j + 1; i < d; ++i) z(i, j) = 0.0;
        apply_reflector_left(z, hh, j, j + 1, q);
    }
    DenseMatrix qd = DenseMatrix::identity(d);
    for (std::size_t j = q; j-- > 0;) apply_reflector_left(qd, refl[j], j, 0, d);

    // transformed window
    DenseMatrix w(d, d);
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t i = 0; i < d; ++i) w(i, j) = s(pos + i, pos + j);
    DenseMatrix tmp(d, d), wnew(d, d);
    blas::gemm(true, false, d, d, d, 1.0, qd.data(), d, w.data(), d, tmp.data(), d);
    blas::gemm(false, false, d, d, d, 1.0, tmp.data(), d, qd.data(), d, wnew.data(), d);

    double wnorm = 0.0, offnorm = 0.0;
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t i = 0; i < d; ++i) {
            wnorm = std::fmax(wnorm, std::fabs(w(i, j)));
            if (i >= q && j < q && i >= j + 1) offnorm = std::fmax(offnorm, std::fabs(wnew(i, j)));
        }
    if (offnorm > 32.0 * kEps * std::fmax(wnorm, kSafeMin)) return SwapStatus::rejected;

    for (std::size_t j = 0; j < q; ++j)
        for (std::size_t i = q; i < d; ++i) wnew(i, j) = 0.0;

    // commit: window block, coupled rows/columns, accumulator
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t i = 0; i < d; ++i) s(pos + i, pos + j) = wnew(i, j);
    // rows above the window, columns [pos, pos+d): right-multiply by qd
    if (pos > 0) {
        DenseMatrix top(pos, d), topn(pos, d);
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t i = 0; i < pos; ++i) top(i, j) = s(i, pos + j);
        blas::gemm(false, false, pos, d, d, 1.0, top.data(), pos, qd.data(), d,
                   topn.data(), pos);
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t i = 0; i < pos; ++i) s(i, pos + j) = topn(i, j);
    }
    // columns right of the window, rows [pos, pos+d): left-multiply by qd^T
    if (pos + d < n) {
        const std::size_t rw = n - pos - d;
        DenseMatrix rgt(d, rw), rgtn(d, rw);
        for (std::size_t j = 0; j < rw; ++j)
            for (std::size_t i = 0; i < d; ++i) rgt(i, j) = s(pos + i, pos + d + j);
        blas::gemm(true, false, d, rw, d, 1.0, qd.data(), d, rgt.data(), d,
                   rgtn.data(), d);
        for (std::size_t j = 0; j < rw; ++j)
            for (std::size_t i = 0; i < d; ++i) s(pos + i, pos + d + j) = rgtn(i, j);
    }
    {
        const std::size_t ar = acc.rows();
        DenseMatrix av(ar, d), avn(ar, d);
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t i = 0; i < ar; ++i) av(i, j) = acc(i, pos + j);
        blas::gemm(false, false, ar, d, d, 1.0, av.data(), ar, qd.data(), d,
                   avn.data(), ar);
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t i = 0; i < ar; ++i) acc(i, pos + j) = avn(i, j);
    }

    // restandardize the relocated blocks
    auto restd = [&](std::size_t bp) {
        const std::size_t nn = s.rows();
        auto std2 = standardize_2x2(s(bp, bp), s(bp, bp + 1), s(bp + 1, bp), s(bp + 1, bp + 1));
        GivensRotation g{std2.rotation.c, std2.rotation.s, bp, bp + 1};
        apply_givens_left(s, g, bp + 2, nn);
        apply_givens_right(s, g, 0, bp);
        s(bp, bp) = std2.a;
        s(bp, bp + 1) = std2.b;
        s(bp + 1, bp) = std2.c;
        s(bp + 1, bp + 1) = std2.d;
        apply_givens_right(acc, g, 0, acc.rows());
    };
    if (q == 2) restd(pos);
    if (p == 2) restd(pos + q);
    return SwapStatus::ok;
}

// ---------------------------------------------------------------------- //
// Protected quasi-triangular solve

namespace {

struct MicroSolve {
    double z[4] = {0.0, 0.0, 0.0, 0.0};
    std::int64_t need_scale = 0; // > 0: retry after scaling column by 2^-need_scale
    bool perturbed = false;
};

/// Solves M z = rhs (d <= 4) by complete pivoting on scaled copies. If any
/// intermediate would leave the overflow-guarded range, reports the power of
/// two the right-hand side must be scaled down by instead of producing it.
MicroSolve micro_solve(std::size_t d, const double* m_in, const double* rhs_in,
                       double pivot_floor) {
    MicroSolve out;
    double m[16], rhs[4];
    double mmax = 0.0;
    for (std::size_t i = 0; i < d * d; ++i) mmax = std::fmax(mmax, std::fabs(m_in[i]));
    // scale the matrix (both sides of the system) to around unity
    int mexp = 0;
    if (mmax > 0.0) mexp = std::ilogb(mmax);
    const double msc = std::ldexp(1.0, -mexp);
    for (std::size_t i = 0; i < d * d; ++i) m[i] = m_in[i] * msc;
    const double floor_scaled = pivot_floor * msc;

    double rmax = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        rhs[i] = rhs_in[i];
        rmax = std::fmax(rmax, std::fabs(rhs[i]));
    }
    const double rhs_cap = std::ldexp(1.0, 1010);
    if (rmax >= rhs_cap) {
        out.need_scale = std::max(std::ilogb(rmax) - 1010 + 1, 1);
        return out;
    }

    std::size_t cperm[4] = {0, 1, 2, 3};
    for (std::size_t k = 0; k < d; ++k) {
        std::size_t pi = k, pj = k;
        double pv = 0.0;
        for (std::size_t i = k; i < d; ++i)
            for (std::size_t j = k; j < d; ++j)
                if (std::fabs(m[i * d + j]) > pv) {
                    pv = std::fabs(m[i * d + j]);
                    pi = i;
                    pj = j;
                }
        if (pi != k) {
            for (std::size_t j = 0; j < d; ++j) std::swap(m[k * d + j], m[pi * d + j]);
            std::swap(rhs[k], rhs[pi]);
        }
        if (pj != k) {
            for (std::size_t i = 0; i < d; ++i) std::swap(m[i * d + k], m[i * d + pj]);
            std::swap(cperm[k], cperm[pj]);
        }
        if (m[k * d + k] == 0.0) {
            m[k * d + k] = floor_scaled > 0.0 ? floor_scaled : kSafeMin;
            out.perturbed = true;
        }
        for (std::size_t i = k + 1; i < d; ++i) {
            const double f = m[i * d + k] / m[k * d + k];
            m[i * d + k] = 0.0;
            for (std::size_t j = k + 1; j < d; ++j) m[i * d + j] -= f * m[k * d + j];
            rhs[i] -= f * rhs[k];
        }
    }

    const double zcap = std::ldexp(1.0, 1005);
    double zz[4] = {0, 0, 0, 0};
    for (std::size_t kk = d; kk-- > 0;) {
        double acc = rhs[kk];
        for (std::size_t j = kk + 1; j < d; ++j) acc -= m[kk * d + j] * zz[j];
        const double den = m[kk * d + kk];
        if (std::fabs(acc) > std::fabs(den) * zcap) {
            // solving onward would overflow; request a rescale of the column
            const int over = std::ilogb(std::fabs(acc) / std::fabs(den)) - 1000;
            out.need_scale = std::max(over, 8);
            return out;
        }
        const double zk = acc / den;
        // the solution is unscaled by msc afterwards; cap that too
        if (zk != 0.0 && std::ilogb(std::fabs(zk)) - mexp > 1005) {
            out.need_scale = std::max(std::ilogb(std::fabs(zk)) - mexp - 1000, 8);
            return out;
        }
        zz[kk] = zk;
    }
    // undo the matrix scaling: (msc M) z' = rhs  =>  z = msc z'
    for (std::size_t i = 0; i < d; ++i) {
        const double zv = zz[i] * msc;
        out.z[cperm[i]] = zv;
    }
    return out;
}

} // namespace

ProtectedSolveResult protected_small_solve(const DenseMatrix& t, double shift_re,
                                           double shift_im, double* col_re,
                                           double* col_im, std::size_t len) {
    ProtectedSolveResult res;
    if (len == 0) return res;
    const bool cplx = (col_im != nullptr);

    double tnorm = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
        double rowsum = 0.0;
        for (std::size_t j = 0; j < len; ++j) rowsum += std::fabs(t(i, j));
        tnorm = std::fmax(tnorm, rowsum);
    }
    const double pivot_floor = kEps * std::fmax(tnorm, kSafeMin / kEps);

    auto scale_column = [&](std::int64_t down) {
        const double f = std::ldexp(1.0, static_cast<int>(-down));
        for (std::size_t i = 0; i < len; ++i) col_re[i] *= f;
        if (cplx)
            for (std::size_t i = 0; i < len; ++i) col_im[i] *= f;
        res.scale_exponent -= down;
    };
    auto col_max = [&]() {
        double mx = blas::norm_inf(len, col_re);
        if (cplx) mx = std::fmax(mx, blas::norm_inf(len, col_im));
        return mx;
    };

    // diagonal block boundaries, bottom-up
    std::size_t i = len;
    while (i > 0) {
        std::size_t bs, p;
        if (i >= 2 && t(i - 1, i - 2) != 0.0) {
            bs = i - 2;
            p = 2;
        } else {
            bs = i - 1;
            p = 1;
        }
        i = bs;

        // (D - shift I) z = col[bs..bs+p), solved over the real embedding
        const std::size_t d = p * (cplx ? 2 : 1);
        double m[16], rhs[4];
        for (std::size_t r = 0; r < p; ++r)
            for (std::size_t c = 0; c < p; ++c) {
                const double v = t(bs + r, bs + c) - (r == c ? shift_re : 0.0);
                if (!cplx) {
                    m[r * d + c] = v;
                } else {
                    m[r * d + c] = v;
                    m[(p + r) * d + (p + c)] = v;
                    m[r * d + (p + c)] = (r == c) ? shift_im : 0.0;
                    m[(p + r) * d + c] = (r == c) ? -shift_im : 0.0;
                }
            }
        for (std::size_t r = 0; r < p; ++r) {
            rhs[r] = col_re[bs + r];
            if (cplx) rhs[p + r] = col_im[bs + r];
        }
        MicroSolve ms;
        for (;;) {
            ms = micro_solve(d, m, rhs, pivot_floor);
            if (ms.need_scale == 0) break;
            scale_column(ms.need_scale);
            for (std::size_t r = 0; r < p; ++r) {
                rhs[r] = col_re[bs + r];
                if (cplx) rhs[p + r] = col_im[bs + r];
            }
        }
        res.perturbed_pivot |= ms.perturbed;
        for (std::size_t r = 0; r < p; ++r) {
            col_re[bs + r] = ms.z[r];
            if (cplx) col_im[bs + r] = ms.z[p + r];
        }

        if (bs == 0) break;

        // guard the rank-p update of the rows above this block; the bound is
        // evaluated in exponent space so it cannot itself overflow
        double colmax_t = 0.0;
        for (std::size_t c = 0; c < p; ++c)
            for (std::size_t r = 0; r < bs; ++r)
                colmax_t = std::fmax(colmax_t, std::fabs(t(r, bs + c)));
        double zmax = 0.0;
        for (std::size_t r = 0; r < p; ++r) {
            zmax = std::fmax(zmax, std::fabs(col_re[bs + r]));
            if (cplx) zmax = std::fmax(zmax, std::fabs(col_im[bs + r]));
        }
        for (;;) {
            std::int64_t over = 0;
            if (colmax_t != 0.0 && zmax != 0.0) {
                const int pe = std::ilogb(colmax_t) + std::ilogb(zmax);
                if (pe > 1016) over = pe - 1016;
            }
            if (over == 0) {
                const double bound =
                    col_max() + static_cast<double>(p) * colmax_t * zmax;
                if (bound <= kOverflowGuard) break;
                over = 8;
            }
            scale_column(over);
            zmax = std::ldexp(zmax, static_cast<int>(-over));
        }
        for (std::size_t r = 0; r < bs; ++r) {
            double acc_re = col_re[r];
            double acc_im = cplx ? col_im[r] : 0.0;
            for (std::size_t c = 0; c < p; ++c) {
                const double tv = t(r, bs + c);
                acc_re -= tv * col_re[bs + c];
                if (cplx) acc_im -= tv * col_im[bs + c];
            }
            col_re[r] = acc_re;
            if (cplx) col_im[r] = acc_im;
        }
    }
    return res;
}

} // namespace taskeig::kernels
