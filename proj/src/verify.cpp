//
// taskeig -- task-based dense nonsymmetric eigensolver
//
// SPDX-License-Identifier: BSD-3-Clause
//
#include "taskeig/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace taskeig::verify {

double frob_norm(const std::vector<double>& a, std::size_t n) {
    double mx = 0.0;
    for (std::size_t i = 0; i < n * n; ++i) mx = std::fmax(mx, std::fabs(a[i]));
    if (mx == 0.0) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < n * n; ++i) {
        const double t = a[i] / mx;
        acc += t * t;
    }
    return mx * std::sqrt(acc);
}

double inf_norm(const std::vector<double>& a, std::size_t n) {
    double mx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += std::fabs(a[i * n + j]);
        mx = std::fmax(mx, s);
    }
    return mx;
}

double similarity_residual(const std::vector<double>& a, const std::vector<double>& q,
                           const std::vector<double>& s, std::size_t n) {
    // R = A - Q S Q^T
    std::vector<double> qs(n * n, 0.0), r(a);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k) {
            const double qik = q[i * n + k];
            if (qik == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) qs[i * n + j] += qik * s[k * n + j];
        }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k) {
            const double v = qs[i * n + k];
            if (v == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) r[i * n + j] -= v * q[j * n + k];
        }
    const double na = frob_norm(a, n);
    return frob_norm(r, n) / (na > 0.0 ? na : 1.0);
}

double orthogonality_defect(const std::vector<double>& q, std::size_t n) {
    std::vector<double> g(n * n, 0.0);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < n; ++i) {
            const double v = q[k * n + i];
            if (v == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) g[i * n + j] += v * q[k * n + j];
        }
    for (std::size_t i = 0; i < n; ++i) g[i * n + i] -= 1.0;
    return frob_norm(g, n);
}

bool is_hessenberg(const std::vector<double>& h, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j + 1 < i; ++j)
            if (h[i * n + j] != 0.0) return false;
    return true;
}

bool is_standardized_quasi_triangular(const std::vector<double>& s, std::size_t n,
                                      std::string* why) {
    auto fail = [&](const std::string& msg) {
        if (why) *why = msg;
        return false;
    };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j + 1 < i; ++j)
            if (s[i * n + j] != 0.0) return fail("nonzero below first subdiagonal");
    std::size_t i = 0;
    while (i < n) {
        if (i + 1 < n && s[(i + 1) * n + i] != 0.0) {
            if (s[i * n + i] != s[(i + 1) * n + (i + 1)])
                return fail("2x2 block without equal diagonal");
            if (!(s[i * n + i + 1] * s[(i + 1) * n + i] < 0.0))
                return fail("2x2 block without opposite-sign couple");
            if (i + 2 < n && s[(i + 2) * n + (i + 1)] != 0.0)
                return fail("adjacent blocks overlap");
            i += 2;
        } else {
            i += 1;
        }
    }
    return true;
}

std::vector<std::complex<double>> read_eigenvalues(const std::vector<double>& s,
                                                   std::size_t n) {
    std::vector<std::complex<double>> ev;
    std::size_t i = 0;
    while (i < n) {
        if (i + 1 < n && s[(i + 1) * n + i] != 0.0) {
            const double a = s[i * n + i], b = s[i * n + i + 1];
            const double c = s[(i + 1) * n + i], d = s[(i + 1) * n + i + 1];
            const double m = 0.5 * (a + d), p = 0.5 * (a - d);
            const double disc = p * p + b * c;
            if (disc < 0.0) {
                const double im = std::sqrt(-disc);
                ev.emplace_back(m, im);
                ev.emplace_back(m, -im);
            } else {
                const double r = std::sqrt(disc);
                ev.emplace_back(m + r, 0.0);
                ev.emplace_back(m - r, 0.0);
            }
            i += 2;
        } else {
            ev.emplace_back(s[i * n + i], 0.0);
            i += 1;
        }
    }
    return ev;
}

double match_spectra(std::vector<std::complex<double>> a,
                     std::vector<std::complex<double>> b) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    double worst = 0.0;
    while (!a.empty()) {
        std::size_t bi = 0, bj = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < a.size(); ++i)
            for (std::size_t j = 0; j < b.size(); ++j) {
                const double d = std::abs(a[i] - b[j]);
                if (d < best) {
                    best = d;
                    bi = i;
                    bj = j;
                }
            }
        worst = std::fmax(worst, best);
        a.erase(a.begin() + static_cast<std::ptrdiff_t>(bi));
        b.erase(b.begin() + static_cast<std::ptrdiff_t>(bj));
    }
    return worst;
}

std::vector<std::complex<double>> charpoly_roots(const std::vector<double>& m,
                                                 std::size_t n) {
    if (n > 4) throw std::invalid_argument("charpoly_roots: n must be <= 4");
    if (n == 0) return {};
    // Leverrier-Faddeev: coefficients of lambda^n + c1 lambda^{n-1} + ... + cn
    std::vector<double> c(n + 1, 0.0);
    c[0] = 1.0;
    std::vector<double> mk(m); // M^k accumulator
    std::vector<double> tr(n + 1, 0.0);
    for (std::size_t k = 1; k <= n; ++k) {
        double t = 0.0;
        for (std::size_t i = 0; i < n; ++i) t += mk[i * n + i];
        tr[k] = t;
        if (k < n) {
            std::vector<double> next(n * n, 0.0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t l = 0; l < n; ++l) {
                    const double v = mk[i * n + l];
                    if (v == 0.0) continue;
                    for (std::size_t j = 0; j < n; ++j)
                        next[i * n + j] += v * m[l * n + j];
                }
            mk.swap(next);
        }
    }
    for (std::size_t k = 1; k <= n; ++k) {
        double s = tr[k];
        for (std::size_t j = 1; j < k; ++j) s += c[j] * tr[k - j];
        c[k] = -s / static_cast<double>(k);
    }
    // Durand-Kerner
    using C = std::complex<double>;
    auto eval = [&](C z) {
        C acc = c[0];
        for (std::size_t k = 1; k <= n; ++k) acc = acc * z + c[k];
        return acc;
    };
    std::vector<C> roots(n);
    const C w(0.4, 0.9);
    C p = w;
    for (std::size_t i = 0; i < n; ++i) {
        roots[i] = p;
        p *= w;
    }
    for (int it = 0; it < 500; ++it) {
        double delta = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            C denom(1.0, 0.0);
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) denom *= roots[i] - roots[j];
            const C corr = eval(roots[i]) / denom;
            roots[i] -= corr;
            delta = std::fmax(delta, std::abs(corr));
        }
        if (delta < 1e-300) break;
    }
    // snap conjugate structure: tiny imaginary parts to zero
    double scale = 0.0;
    for (auto& r : roots) scale = std::fmax(scale, std::abs(r));
    for (auto& r : roots)
        if (std::fabs(r.imag()) < 1e-12 * std::fmax(scale, 1.0)) r = {r.real(), 0.0};
    return roots;
}

// ------------------------------------------------------------------ //

namespace {

/// Applies a full-length Householder similarity built from w (3 or 2
/// entries) at row base r: the scalar route the windowed code must match.
void apply_full_reflector(std::vector<double>& h, std::vector<double>& q,
                          std::size_t n, std::size_t r, const double* w,
                          std::size_t len) {
    double nrm = 0.0;
    for (std::size_t i = 0; i < len; ++i) nrm = std::hypot(nrm, w[i]);
    if (nrm == 0.0) return;
    double v[3];
    const double beta = (w[0] >= 0.0 ? -nrm : nrm);
    v[0] = w[0] - beta;
    for (std::size_t i = 1; i < len; ++i) v[i] = w[i];
    double vtv = 0.0;
    for (std::size_t i = 0; i < len; ++i) vtv += v[i] * v[i];
    if (vtv == 0.0) return;
    const double tau = 2.0 / vtv;
    // left
    for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < len; ++i) acc += v[i] * h[(r + i) * n + j];
        acc *= tau;
        for (std::size_t i = 0; i < len; ++i) h[(r + i) * n + j] -= acc * v[i];
    }
    // right
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < len; ++j) acc += h[i * n + r + j] * v[j];
        acc *= tau;
        for (std::size_t j = 0; j < len; ++j) h[i * n + r + j] -= acc * v[j];
    }
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < len; ++j) acc += q[i * n + r + j] * v[j];
        acc *= tau;
        for (std::size_t j = 0; j < len; ++j) q[i * n + r + j] -= acc * v[j];
    }
}

} // namespace

void reference_unblocked_sweep(std::vector<double>& h, std::vector<double>& q,
                               std::size_t n,
                               const std::vector<std::complex<double>>& shifts) {
    if (shifts.size() % 2 != 0)
        throw std::invalid_argument("reference sweep needs an even shift count");
    // one pair at a time, chased all the way off the matrix
    for (std::size_t sp = 0; sp + 1 < shifts.size(); sp += 2) {
        const double ssum = (shifts[sp] + shifts[sp + 1]).real();
        const double sprod = (shifts[sp] * shifts[sp + 1]).real();
        if (n < 3) break;
        double v[3];
        v[0] = h[0] * h[0] + h[1] * h[n] - ssum * h[0] + sprod;
        v[1] = h[n] * (h[0] + h[n + 1] - ssum);
        v[2] = h[n] * h[2 * n + 1];
        for (std::size_t i = 0; i + 3 <= n; ++i) {
            double w[3];
            if (i == 0) {
                w[0] = v[0];
                w[1] = v[1];
                w[2] = v[2];
            } else {
                w[0] = h[i * n + i - 1];
                w[1] = h[(i + 1) * n + i - 1];
                w[2] = h[(i + 2) * n + i - 1];
            }
            apply_full_reflector(h, q, n, i, w, 3);
            if (i > 0) {
                h[(i + 1) * n + i - 1] = 0.0;
                h[(i + 2) * n + i - 1] = 0.0;
            }
        }
        {
            const std::size_t i = n - 2;
            double w[2] = {h[i * n + i - 1], h[(i + 1) * n + i - 1]};
            apply_full_reflector(h, q, n, i, w, 2);
            h[(i + 1) * n + i - 1] = 0.0;
        }
    }
}

std::vector<double> unprotected_eigvec_solve(const std::vector<double>& s,
                                             std::size_t n, std::size_t pos) {
    std::vector<double> y(n, 0.0);
    const double lambda = s[pos * n + pos];
    y[pos] = 1.0;
    for (std::size_t ii = pos; ii-- > 0;) {
        double acc = 0.0;
        for (std::size_t j = ii + 1; j <= pos; ++j) acc += s[ii * n + j] * y[j];
        y[ii] = -acc / (s[ii * n + ii] - lambda);
    }
    return y;
}

// ------------------------------------------------------------------ //

XDouble XDouble::from(double v) {
    XDouble x;
    if (v == 0.0) return x;
    int e = 0;
    x.frac = std::frexp(v, &e) * 2.0; // frac in [1,2)
    x.exp = e - 1;
    return x;
}

double XDouble::log2_abs() const {
    if (is_zero()) return -std::numeric_limits<double>::infinity();
    return std::log2(std::fabs(frac)) + static_cast<double>(exp);
}

static XDouble xnorm(double f, std::int64_t e) {
    XDouble x;
    if (f == 0.0) return x;
    int ee = 0;
    x.frac = std::frexp(f, &ee) * 2.0;
    x.exp = e + ee - 1;
    return x;
}

XDouble xadd(XDouble a, XDouble b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    if (a.exp < b.exp) std::swap(a, b);
    const std::int64_t d = a.exp - b.exp;
    if (d > 100) return a;
    return xnorm(a.frac + std::ldexp(b.frac, static_cast<int>(-d)), a.exp);
}

XDouble xsub(XDouble a, XDouble b) {
    b.frac = -b.frac;
    return xadd(a, b);
}

XDouble xmul(XDouble a, XDouble b) {
    if (a.is_zero() || b.is_zero()) return {};
    return xnorm(a.frac * b.frac, a.exp + b.exp);
}

XDouble xdiv(XDouble a, XDouble b) {
    if (a.is_zero()) return {};
    if (b.is_zero()) throw std::domain_error("xdiv by zero");
    return xnorm(a.frac / b.frac, a.exp - b.exp);
}

std::vector<XDouble> xdouble_triangular_solve(const std::vector<double>& t,
                                              std::size_t n, double shift,
                                              const std::vector<double>& b) {
    std::vector<XDouble> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = XDouble::from(b[i]);
    for (std::size_t ii = n; ii-- > 0;) {
        XDouble acc = x[ii];
        for (std::size_t j = ii + 1; j < n; ++j)
            acc = xsub(acc, xmul(XDouble::from(t[ii * n + j]), x[j]));
        const XDouble den = xsub(XDouble::from(t[ii * n + ii]), XDouble::from(shift));
        x[ii] = xdiv(acc, den);
    }
    return x;
}

// ------------------------------------------------------------------ //

void VerificationReport::check(const std::string& name, double value, double tol) {
    metrics[name] = value;
    tolerances[name] = tol;
    if (!(value <= tol) || !std::isfinite(value)) {
        pass = false;
        failures.push_back(name);
    }
}

void VerificationReport::check_flag(const std::string& name, bool ok) {
    metrics[name] = ok ? 0.0 : 1.0;
    tolerances[name] = 0.0;
    if (!ok) {
        pass = false;
        failures.push_back(name);
    }
}

std::string VerificationReport::to_json() const {
    nlohmann::json j;
    j["pass"] = pass;
    j["metrics"] = metrics;
    j["tolerances"] = tolerances;
    j["failures"] = failures;
    return j.dump(2);
}

VerificationReport verify_schur(const SchurCheckInput& in) {
    VerificationReport rep;
    rep.check("backward_error", similarity_residual(in.a, in.q, in.s, in.n),
              in.tol_backward);
    rep.check("orthogonality", orthogonality_defect(in.q, in.n), in.tol_orth);
    std::string why;
    rep.check_flag("quasi_triangular_standardized",
                   is_standardized_quasi_triangular(in.s, in.n, &why));
    return rep;
}

VerificationReport verify_hessenberg(const std::vector<double>& a,
                                     const std::vector<double>& q,
                                     const std::vector<double>& h, std::size_t n,
                                     double tol_backward, double tol_orth) {
    VerificationReport rep;
    rep.check("backward_error", similarity_residual(a, q, h, n), tol_backward);
    rep.check("orthogonality", orthogonality_defect(q, n), tol_orth);
    rep.check_flag("hessenberg_structure", is_hessenberg(h, n));
    return rep;
}

VerificationReport verify_eigenvectors(const EigvecCheckInput& in) {
    VerificationReport rep;
    const std::size_t n = in.n;
    const double anorm = inf_norm(in.a, n);
    double worst = 0.0;
    for (std::size_t col = 0; col < in.k; ++col) {
        if (in.col_kind[col] == 2) continue; // handled with its re-part
        const double* xr = in.x.data() + col * n;
        const double lr = in.lambdas[col].real(), li = in.lambdas[col].imag();
        double rmax = 0.0, xmax = 0.0;
        if (in.col_kind[col] == 0) {
            for (std::size_t i = 0; i < n; ++i) {
                double acc = -lr * xr[i];
                for (std::size_t j = 0; j < n; ++j) acc += in.a[i * n + j] * xr[j];
                rmax = std::fmax(rmax, std::fabs(acc));
                xmax = std::fmax(xmax, std::fabs(xr[i]));
            }
        } else {
            const double* xi = in.x.data() + (col + 1) * n;
            for (std::size_t i = 0; i < n; ++i) {
                double ar = -(lr * xr[i] - li * xi[i]);
                double ai = -(lr * xi[i] + li * xr[i]);
                for (std::size_t j = 0; j < n; ++j) {
                    ar += in.a[i * n + j] * xr[j];
                    ai += in.a[i * n + j] * xi[j];
                }
                rmax = std::fmax(rmax, std::fmax(std::fabs(ar), std::fabs(ai)));
                xmax = std::fmax(xmax, std::fmax(std::fabs(xr[i]), std::fabs(xi[i])));
            }
        }
        if (xmax > 0.0 && anorm > 0.0) worst = std::fmax(worst, rmax / (anorm * xmax));
        else worst = std::fmax(worst, rmax);
    }
    rep.check("eigenvector_residual", worst, in.tol);
    return rep;
}

} // namespace taskeig::verify
