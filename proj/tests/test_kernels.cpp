#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "taskeig/kernels.hpp"
#include "taskeig/philox.hpp"
#include "taskeig/verify.hpp"

using namespace taskeig;
using namespace taskeig::kernels;

namespace {
constexpr double kEps = 2.220446049250313e-16;

DenseMatrix random_matrix(std::size_t n, std::uint64_t seed) {
    Philox rng(seed);
    DenseMatrix m(n, n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) m(i, j) = rng.uniform_sym();
    return m;
}

DenseMatrix random_hessenberg(std::size_t n, std::uint64_t seed) {
    DenseMatrix m = random_matrix(n, seed);
    for (std::size_t j = 0; j + 2 < n; ++j)
        for (std::size_t i = j + 2; i < n; ++i) m(i, j) = 0.0;
    return m;
}

std::vector<double> to_rowmajor(const DenseMatrix& m) {
    std::vector<double> out(m.rows() * m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out[i * m.cols() + j] = m(i, j);
    return out;
}

double residual_frob(const DenseMatrix& a, const DenseMatrix& q, const DenseMatrix& s) {
    return verify::similarity_residual(to_rowmajor(a), to_rowmajor(q), to_rowmajor(s),
                                       a.rows());
}

/// Explicit (I - tau v v^T) x.
std::vector<double> apply_explicit(const Reflector& h, std::span<const double> x) {
    std::vector<double> y(x.begin(), x.end());
    double w = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) w += h.v[i] * x[i];
    for (std::size_t i = 0; i < x.size(); ++i) y[i] -= h.tau * w * h.v[i];
    return y;
}
} // namespace

TEST_CASE("reflector of the zero vector is the identity") {
    auto [h, beta] = make_reflector(std::vector<double>{0.0, 0.0, 0.0});
    CHECK(h.tau == 0.0);
    CHECK(beta == 0.0);
}

TEST_CASE("reflector of (3,4)") {
    auto [h, beta] = make_reflector(std::vector<double>{3.0, 4.0});
    CHECK(beta == doctest::Approx(-5.0).epsilon(1e-15));
    auto y = apply_explicit(h, std::vector<double>{3.0, 4.0});
    CHECK(std::fabs(y[0] - beta) <= 4 * kEps * 5.0);
    CHECK(std::fabs(y[1]) <= 4 * kEps * 5.0);
}

TEST_CASE("reflector collapses random vectors and stays orthogonal") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Philox rng(seed + 1000);
        const std::size_t n = 20;
        std::vector<double> x(n);
        for (auto& e : x) e = rng.uniform_sym();
        auto [h, beta] = make_reflector(x);
        const double nx = blas::nrm2(n, x.data());
        CHECK(std::fabs(std::fabs(beta) - nx) <= 8 * kEps * nx);
        auto y = apply_explicit(h, x);
        double err = std::fabs(y[0] - beta);
        for (std::size_t i = 1; i < n; ++i) err = std::fmax(err, std::fabs(y[i]));
        CHECK(err <= 8 * kEps * nx);
        // orthogonality of I - tau v v^T
        if (h.tau != 0.0) {
            DenseMatrix p(n, n);
            for (std::size_t i = 0; i < n; ++i) p(i, i) = 1.0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) p(i, j) -= h.tau * h.v[i] * h.v[j];
            CHECK(verify::orthogonality_defect(to_rowmajor(p), n) <= 8 * kEps * n);
        }
    }
}

TEST_CASE("standardize_2x2 diagonal input") {
    auto r = standardize_2x2(2, 0, 0, 3);
    CHECK(r.c == 0.0);
    CHECK(r.lambda1 == std::complex<double>(2.0, 0.0));
    CHECK(r.lambda2 == std::complex<double>(3.0, 0.0));
}

TEST_CASE("standardize_2x2 rotation block") {
    auto r = standardize_2x2(0, 1, -1, 0);
    CHECK(r.a == r.d);
    CHECK(r.a == 0.0);
    CHECK(r.lambda1 == std::complex<double>(0.0, 1.0));
    CHECK(r.lambda2 == std::complex<double>(0.0, -1.0));
}

TEST_CASE("standardize_2x2 matches the quadratic oracle on random blocks") {
    for (std::uint64_t seed = 0; seed < 400; ++seed) {
        Philox rng(seed * 13 + 5);
        const double a = rng.uniform_sym(), b = rng.uniform_sym();
        const double c = rng.uniform_sym(), d = rng.uniform_sym();
        auto r = standardize_2x2(a, b, c, d);
        const double norm = std::fmax(std::fmax(std::fabs(a), std::fabs(b)),
                                      std::fmax(std::fabs(c), std::fabs(d)));
        // rotation is orthogonal
        CHECK(std::fabs(r.rotation.c * r.rotation.c + r.rotation.s * r.rotation.s - 1.0)
              <= 4 * kEps);
        // standard form
        if (r.c != 0.0) {
            CHECK(r.a == r.d);
            CHECK(r.b * r.c < 0.0);
        }
        // eigenvalues preserved vs the characteristic polynomial roots
        const std::vector<double> m{a, b, c, d};
        auto roots = verify::charpoly_roots(m, 2);
        auto mismatch = verify::match_spectra({r.lambda1, r.lambda2}, roots);
        CHECK(mismatch <= 1e-13 * std::fmax(norm, 1e-300) + 1e-300);
        // the rotation really maps input to output form
        const double cs = r.rotation.c, sn = r.rotation.s;
        const double aa = cs * a + sn * c, bb = cs * b + sn * d;
        const double cc = -sn * a + cs * c, dd = -sn * b + cs * d;
        const double na = aa * cs + bb * sn, nb = -aa * sn + bb * cs;
        const double nc = cc * cs + dd * sn, nd = -cc * sn + dd * cs;
        CHECK(std::fabs(na - r.a) <= 64 * kEps * std::fmax(norm, 1e-300));
        CHECK(std::fabs(nb - r.b) <= 64 * kEps * std::fmax(norm, 1e-300));
        CHECK(std::fabs(nc - r.c) <= 64 * kEps * std::fmax(norm, 1e-300));
        CHECK(std::fabs(nd - r.d) <= 64 * kEps * std::fmax(norm, 1e-300));
    }
}

TEST_CASE("standardize_2x2 is exactly invariant under power-of-two scaling") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Philox rng(seed * 29 + 2);
        const double a = rng.uniform_sym(), b = rng.uniform_sym();
        const double c = rng.uniform_sym(), d = rng.uniform_sym();
        auto base = standardize_2x2(a, b, c, d);
        for (int e : {-900, -500, 500, 980}) {
            const double s = std::ldexp(1.0, e);
            auto scaled = standardize_2x2(a * s, b * s, c * s, d * s);
            CHECK(scaled.rotation.c == doctest::Approx(base.rotation.c).epsilon(8 * kEps));
            CHECK(std::fabs(scaled.rotation.s - base.rotation.s) <= 8 * kEps);
            CHECK(std::fabs(scaled.a - base.a * s) <= 8 * kEps * std::fabs(base.a * s));
            CHECK(std::fabs(scaled.d - base.d * s) <= 8 * kEps * std::fabs(base.d * s));
            if (base.c != 0.0 && scaled.c != 0.0) {
                CHECK(scaled.a == scaled.d);
                CHECK(std::signbit(scaled.b) != std::signbit(scaled.c));
            }
        }
    }
}

TEST_CASE("small_hessenberg leaves 2x2 alone") {
    DenseMatrix m = random_matrix(2, 4);
    DenseMatrix orig = m, q;
    small_hessenberg(m, q);
    CHECK(m == orig);
    CHECK(q == DenseMatrix::identity(2));
}

TEST_CASE("small_hessenberg of a symmetric matrix is tridiagonal") {
    DenseMatrix m(6, 6);
    Philox rng(8);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            const double v = rng.uniform_sym();
            m(i, j) = v;
            m(j, i) = v;
        }
    const double nrm = frobenius_norm(m);
    DenseMatrix q;
    small_hessenberg(m, q);
    for (std::size_t j = 0; j < 6; ++j)
        for (std::size_t i = 0; i < 6; ++i)
            if (i + 1 < j) CHECK(std::fabs(m(i, j)) <= 32 * kEps * nrm);
}

TEST_CASE("small_hessenberg residual and orthogonality bounds") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const std::size_t n = 10;
        DenseMatrix m = random_matrix(n, seed + 60);
        DenseMatrix orig = m, q;
        small_hessenberg(m, q);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = j + 2; i < n; ++i) CHECK(m(i, j) == 0.0);
        CHECK(residual_frob(orig, q, m) <= 16.0 * n * kEps);
        CHECK(verify::orthogonality_defect(to_rowmajor(q), n) <= 16.0 * n * kEps);
    }
}

TEST_CASE("small_schur on triangular input converges instantly") {
    DenseMatrix h(4, 4);
    Philox rng(3);
    for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t i = 0; i <= j; ++i) h(i, j) = rng.uniform_sym();
    DenseMatrix orig = h, q;
    auto res = small_schur(h, q);
    CHECK(res.converged);
    CHECK(res.sweeps == 0);
    CHECK(h == orig);
    CHECK(q == DenseMatrix::identity(4));
}

TEST_CASE("small_schur of the rotation matrix") {
    DenseMatrix h(2, 2);
    h(0, 1) = 1.0;
    h(1, 0) = -1.0;
    DenseMatrix q;
    auto res = small_schur(h, q);
    CHECK(res.converged);
    CHECK(h(0, 0) == h(1, 1));
    CHECK(h(0, 1) * h(1, 0) < 0.0);
    auto ev = scan_diag_blocks(h);
    REQUIRE(ev.size() == 1);
    CHECK(ev[0].im == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("small_schur companion matrix eigenvalues {1,2,3}") {
    // lambda^3 - 6 lambda^2 + 11 lambda - 6
    DenseMatrix h(3, 3);
    h(0, 0) = 6.0;
    h(0, 1) = -11.0;
    h(0, 2) = 6.0;
    h(1, 0) = 1.0;
    h(2, 1) = 1.0;
    DenseMatrix q;
    auto res = small_schur(h, q);
    CHECK(res.converged);
    std::vector<std::complex<double>> got;
    for (const auto& b : scan_diag_blocks(h)) {
        got.emplace_back(b.re, b.im);
        if (b.size == 2) got.emplace_back(b.re, -b.im);
    }
    CHECK(verify::match_spectra(got, {{1, 0}, {2, 0}, {3, 0}}) <= 1e-12);
}

TEST_CASE("small_schur: 1000 random 20x20 Hessenberg matrices") {
    std::size_t converged = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        DenseMatrix h = random_hessenberg(20, seed * 7 + 1);
        DenseMatrix orig = h, q;
        auto res = small_schur(h, q);
        if (res.converged) ++converged;
        CHECK(residual_frob(orig, q, h) <= 16.0 * 20 * kEps);
        std::string why;
        CHECK(verify::is_standardized_quasi_triangular(to_rowmajor(h), 20, &why));
    }
    CHECK(converged == 1000);
}

TEST_CASE("swap of 1x1 blocks diag(1,2)") {
    DenseMatrix s(2, 2);
    s(0, 0) = 1.0;
    s(1, 1) = 2.0;
    DenseMatrix acc = DenseMatrix::identity(2);
    auto st = swap_adjacent_blocks(s, acc, 0, 1, 1);
    CHECK(st == SwapStatus::ok);
    CHECK(s(0, 0) == 2.0);
    CHECK(s(1, 1) == 1.0);
    CHECK(s(1, 0) == 0.0);
    CHECK(verify::orthogonality_defect(to_rowmajor(acc), 2) <= 8 * kEps);
}

TEST_CASE("swap moves a complex pair ahead of a real eigenvalue") {
    DenseMatrix s(3, 3);
    s(0, 0) = 5.0;
    s(0, 1) = 0.3;
    s(0, 2) = -0.7;
    s(1, 1) = 0.0;
    s(1, 2) = 1.0;
    s(2, 1) = -1.0;
    s(2, 2) = 0.0;
    DenseMatrix acc = DenseMatrix::identity(3);
    auto st = swap_adjacent_blocks(s, acc, 0, 1, 2);
    CHECK(st == SwapStatus::ok);
    // pair now leads
    CHECK(s(1, 0) != 0.0);
    CHECK(s(2, 0) == 0.0);
    CHECK(s(2, 1) == 0.0);
    CHECK(s(2, 2) == doctest::Approx(5.0).epsilon(1e-12));
    auto roots = verify::charpoly_roots(to_rowmajor(s), 3);
    CHECK(verify::match_spectra(roots, {{5, 0}, {0, 1}, {0, -1}}) <= 1e-12);
}

TEST_CASE("swapping identical eigenvalues is a no-op or a rejection") {
    DenseMatrix s(2, 2);
    s(0, 0) = 3.0;
    s(1, 1) = 3.0;
    DenseMatrix acc = DenseMatrix::identity(2);
    auto st = swap_adjacent_blocks(s, acc, 0, 1, 1);
    (void)st;
    CHECK(s(0, 0) == 3.0);
    CHECK(s(1, 1) == 3.0);
    CHECK(s(1, 0) == 0.0);
}

TEST_CASE("swap preserves eigenvalues on random standardized windows") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Philox rng(seed + 31337);
        const std::size_t p = 1 + rng.bounded(2), q = 1 + rng.bounded(2);
        const std::size_t d = p + q;
        DenseMatrix s(d, d);
        auto put_block = [&](std::size_t at, std::size_t sz) {
            if (sz == 1) {
                s(at, at) = 2.0 * rng.uniform_sym();
            } else {
                const double re = rng.uniform_sym(), im = 0.2 + rng.uniform01();
                s(at, at) = re;
                s(at + 1, at + 1) = re;
                s(at, at + 1) = im;
                s(at + 1, at) = -im;
            }
        };
        put_block(0, p);
        put_block(p, q);
        for (std::size_t j = p; j < d; ++j)
            for (std::size_t i = 0; i < p; ++i) s(i, j) = rng.uniform_sym();
        auto before = verify::charpoly_roots(to_rowmajor(s), d);
        DenseMatrix acc = DenseMatrix::identity(d);
        auto st = swap_adjacent_blocks(s, acc, 0, p, q);
        if (st == SwapStatus::ok) {
            auto after = verify::charpoly_roots(to_rowmajor(s), d);
            CHECK(verify::match_spectra(before, after) <= 1e-12 * 10.0);
            CHECK(verify::orthogonality_defect(to_rowmajor(acc), d) <= 16 * d * kEps);
            // leading block now carries the trailing eigenvalues
            std::string why;
            CHECK(verify::is_standardized_quasi_triangular(to_rowmajor(s), d, &why));
        }
    }
}

TEST_CASE("protected solve: identity system") {
    DenseMatrix t = DenseMatrix::identity(3);
    std::vector<double> b{1.0, 0.0, 0.0};
    auto res = protected_small_solve(t, 0.0, 0.0, b.data(), nullptr, 3);
    CHECK(res.scale_exponent == 0);
    CHECK(!res.perturbed_pivot);
    CHECK(b == std::vector<double>{1.0, 0.0, 0.0});
}

TEST_CASE("protected solve survives the classic overflow trap") {
    DenseMatrix t(2, 2);
    t(0, 0) = 1e-300;
    t(0, 1) = 1e300;
    t(1, 1) = 1e-300;
    std::vector<double> b{1.0, 1.0};
    auto res = protected_small_solve(t, 0.0, 0.0, b.data(), nullptr, 2);
    CHECK(std::isfinite(b[0]));
    CHECK(std::isfinite(b[1]));
    CHECK(res.scale_exponent < 0); // alpha' < 1
    // compare against the extended-exponent reference
    const std::vector<double> trm{1e-300, 1e300, 0.0, 1e-300};
    auto ref = verify::xdouble_triangular_solve(trm, 2, 0.0, {1.0, 1.0});
    for (std::size_t i = 0; i < 2; ++i) {
        // represented value: b[i] * 2^-scale_exponent
        const double got_log = (b[i] == 0.0 && ref[i].is_zero())
                                   ? -1e9
                                   : std::log2(std::fabs(b[i])) -
                                         static_cast<double>(res.scale_exponent);
        if (!ref[i].is_zero()) {
            CHECK(std::fabs(got_log - ref[i].log2_abs()) <= 1e-9);
            CHECK(std::signbit(b[i]) == std::signbit(ref[i].frac));
        }
    }
}

TEST_CASE("protected solve matches the unprotected one on benign input") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const std::size_t n = 8;
        Philox rng(seed + 555);
        DenseMatrix t(n, n);
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t i = 0; i < j; ++i) t(i, j) = rng.uniform_sym();
            t(j, j) = 2.0 + rng.uniform01(); // well conditioned
        }
        std::vector<double> b(n), ref(n);
        for (auto& e : b) e = rng.uniform_sym();
        ref = b;
        auto res = protected_small_solve(t, 0.0, 0.0, b.data(), nullptr, n);
        CHECK(res.scale_exponent == 0);
        // plain backsubstitution
        for (std::size_t ii = n; ii-- > 0;) {
            double acc = ref[ii];
            for (std::size_t j = ii + 1; j < n; ++j) acc -= t(ii, j) * ref[j];
            ref[ii] = acc / t(ii, ii);
        }
        for (std::size_t i = 0; i < n; ++i)
            CHECK(std::fabs(b[i] - ref[i]) <=
                  1e-13 * std::fmax(std::fabs(ref[i]), 1.0));
    }
}

TEST_CASE("protected solve never produces non-finite values") {
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        Philox rng(seed * 3 + 11);
        const std::size_t n = 1 + rng.bounded(12);
        DenseMatrix t(n, n);
        auto wild = [&]() {
            const double mag = std::pow(10.0, -300.0 + 600.0 * rng.uniform01());
            return rng.uniform_sym() * mag;
        };
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i <= j; ++i) t(i, j) = wild();
        // occasionally a 2x2 standardized block on the diagonal
        if (n >= 2 && seed % 3 == 0) {
            t(1, 0) = -t(0, 1) != 0.0 ? -t(0, 1) : -1.0;
            t(1, 1) = t(0, 0);
        }
        std::vector<double> br(n), bi(n);
        for (auto& e : br) e = wild();
        for (auto& e : bi) e = wild();
        const bool cplx = seed % 2 == 0;
        const double sr = wild(), si = cplx ? std::fabs(wild()) : 0.0;
        auto res = protected_small_solve(t, sr, si, br.data(),
                                         cplx ? bi.data() : nullptr, n);
        (void)res;
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(std::isfinite(br[i]));
            if (cplx) CHECK(std::isfinite(bi[i]));
        }
    }
}
