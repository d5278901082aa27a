#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "taskeig/eigvec.hpp"
#include "taskeig/generate.hpp"
#include "taskeig/hessenberg.hpp"
#include "taskeig/philox.hpp"
#include "taskeig/schur.hpp"
#include "taskeig/verify.hpp"

using namespace taskeig;

namespace {
constexpr double kEps = 2.220446049250313e-16;

/// max_j ||(S - lambda_j I) y_j||_inf / (||S||_inf ||y_j||_inf), complex-aware.
double schur_basis_residual(const std::vector<double>& s, std::size_t n,
                            const EigenvectorSet& ev) {
    const double snorm = verify::inf_norm(s, n);
    double worst = 0.0;
    for (std::size_t j = 0; j < ev.lambdas.size(); ++j) {
        if (ev.col_kind[j] == 2) continue;
        const double lr = ev.lambdas[j].real(), li = ev.lambdas[j].imag();
        double rmax = 0.0, ymax = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double ar = -lr * ev.columns(i, j);
            double ai = 0.0;
            if (ev.col_kind[j] == 1) {
                ar += li * ev.columns(i, j + 1);
                ai = -lr * ev.columns(i, j + 1) - li * ev.columns(i, j);
            }
            for (std::size_t c = 0; c < n; ++c) {
                ar += s[i * n + c] * ev.columns(c, j);
                if (ev.col_kind[j] == 1) ai += s[i * n + c] * ev.columns(c, j + 1);
            }
            rmax = std::fmax(rmax, std::fmax(std::fabs(ar), std::fabs(ai)));
            ymax = std::fmax(ymax, std::fabs(ev.columns(i, j)));
            if (ev.col_kind[j] == 1) ymax = std::fmax(ymax, std::fabs(ev.columns(i, j + 1)));
        }
        worst = std::fmax(worst, rmax / std::fmax(snorm * ymax, 1e-300));
    }
    return worst;
}
} // namespace

TEST_CASE("diagonal S: eigenvectors are unit vectors with zero residual") {
    std::vector<double> d{1, 0, 0, 0, 2, 0, 0, 0, 3};
    TiledMatrix s = TiledMatrix::from_dense(d, 3, 3, 2);
    auto sel = select_eigenvalues(s, [](std::complex<double>) { return true; });
    auto ev = solve_eigenvectors(s, sel);
    REQUIRE(ev.lambdas.size() == 3);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(ev.lambdas[j] == std::complex<double>(1.0 + j, 0.0));
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(ev.columns(i, j) == (i == j ? 1.0 : 0.0));
    }
    CHECK(schur_basis_residual(d, 3, ev) == 0.0);
}

TEST_CASE("rotation block pair: S y = i y") {
    std::vector<double> d{0, 1, -1, 0};
    TiledMatrix s = TiledMatrix::from_dense(d, 2, 2, 2);
    auto sel = select_eigenvalues(s, [](std::complex<double>) { return true; });
    auto ev = solve_eigenvectors(s, sel);
    REQUIRE(ev.lambdas.size() == 2);
    CHECK(ev.col_kind[0] == 1);
    CHECK(ev.lambdas[0] == std::complex<double>(0.0, 1.0));
    CHECK(schur_basis_residual(d, 2, ev) <= 4 * kEps);
}

TEST_CASE("overflow-stress: robust solve stays finite where the naive one dies") {
    ProblemSpec spec;
    spec.kind = ProblemKind::overflow_stress;
    spec.n = 512;
    auto gen = generate(spec);
    const std::size_t n = gen.n;

    // the unprotected reference blows up on the trailing eigenvalue
    auto naive = verify::unprotected_eigvec_solve(gen.a, n, n - 1);
    bool nonfinite = false;
    for (double v : naive) nonfinite |= !std::isfinite(v);
    CHECK(nonfinite);

    TiledMatrix s = TiledMatrix::from_dense(gen.a, n, n, 64);
    std::vector<bool> flags(n, false);
    flags[n - 1] = true;
    auto sel = select_eigenvalues(s, flags);
    auto ev = solve_eigenvectors(s, sel);
    REQUIRE(ev.lambdas.size() == 1);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::isfinite(ev.columns(i, 0)));
    CHECK(schur_basis_residual(gen.a, n, ev) <= 1e-10);
}

TEST_CASE("protect_update: benign norms leave exponents untouched") {
    AugmentedTile x(4, 2), y(4, 2);
    DenseMatrix t(4, 4);
    Philox rng(2);
    for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t i = 0; i < 4; ++i) {
            x.data(i, j) = rng.uniform_sym();
            y.data(i, j) = rng.uniform_sym();
        }
    for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t i = 0; i < 4; ++i) t(i, j) = rng.uniform_sym();
    protect_update(x, y, t);
    CHECK(x.exponents == std::vector<std::int64_t>{0, 0});
    CHECK(y.exponents == std::vector<std::int64_t>{0, 0});
}

TEST_CASE("protect_update: huge T forces a downscale that makes the bound hold") {
    AugmentedTile x(2, 1), y(2, 1);
    DenseMatrix t(2, 2);
    t(0, 0) = 1e300;
    x.data(0, 0) = 1e10;
    y.data(0, 0) = 1.0;
    protect_update(x, y, t);
    CHECK(x.exponents[0] < 0);
    CHECK(x.exponents[0] == y.exponents[0]);
    const double bound = blas::norm_inf(2, y.data.col(0)) +
                         norm_inf(t) * blas::norm_inf(2, x.data.col(0));
    CHECK(bound <= kOmega);
}

TEST_CASE("protect_update: min-exponent convention") {
    AugmentedTile x(2, 1), y(2, 1);
    DenseMatrix t(2, 2);
    x.data(0, 0) = 0.5;
    x.exponents[0] = -3;
    y.data(0, 0) = 0.25;
    y.exponents[0] = 0;
    protect_update(x, y, t);
    CHECK(x.exponents[0] == -3);
    CHECK(y.exponents[0] == -3);
    CHECK(x.data(0, 0) == 0.5);            // untouched
    CHECK(y.data(0, 0) == 0.25 * 0.125);   // exact power-of-two rescale
}

TEST_CASE("linear_update: zero T returns Y bitwise") {
    AugmentedTile x(3, 2), y(3, 2);
    Philox rng(5);
    for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t i = 0; i < 3; ++i) {
            x.data(i, j) = rng.uniform_sym();
            y.data(i, j) = rng.uniform_sym();
        }
    y.exponents = {0, 0};
    auto ycopy = y.data;
    DenseMatrix t(3, 3);
    linear_update(x, y, t);
    CHECK(y.data == ycopy);
    CHECK(y.exponents == std::vector<std::int64_t>{0, 0});
}

TEST_CASE("linear_update: unit exponents match the plain product") {
    AugmentedTile x(4, 1), y(4, 1);
    DenseMatrix t(4, 4);
    Philox rng(7);
    for (std::size_t i = 0; i < 4; ++i) {
        x.data(i, 0) = rng.uniform_sym();
        y.data(i, 0) = rng.uniform_sym();
    }
    for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t i = 0; i < 4; ++i) t(i, j) = rng.uniform_sym();
    auto yref = y.data;
    blas::gemm(false, false, 4, 1, 4, -1.0, t.data(), 4, x.data.data(), 4,
               yref.data(), 4);
    linear_update(x, y, t);
    CHECK(y.data == yref);
}

TEST_CASE("linear_update: exact power-of-two bookkeeping") {
    // alpha = 2^-1, beta = 1, T = I, x = y = e1:
    // represented z = y - 2x = -e1; unified exponent -1 => stored -0.5
    AugmentedTile x(2, 1), y(2, 1);
    x.data(0, 0) = 1.0;
    x.exponents[0] = -1;
    y.data(0, 0) = 1.0;
    y.exponents[0] = 0;
    DenseMatrix t = DenseMatrix::identity(2);
    linear_update(x, y, t);
    CHECK(y.exponents[0] == -1);
    CHECK(y.data(0, 0) == -0.5);
    CHECK(y.data(1, 0) == 0.0);
}

TEST_CASE("consistent_scaling: equal exponents are a bitwise no-op") {
    std::vector<double> a{1.5, -2.5}, b{0.25, 8.0};
    std::vector<SegmentRef> segs{{a.data(), 2, -4}, {b.data(), 2, -4}};
    auto out = consistent_scaling(segs);
    CHECK(out.exponent == -4);
    CHECK(!out.flagged);
    CHECK(a == std::vector<double>{1.5, -2.5});
    CHECK(b == std::vector<double>{0.25, 8.0});
}

TEST_CASE("consistent_scaling: exponents {0,-2} rescale the first segment exactly") {
    std::vector<double> a{1.0, 3.0}, b{0.5, 0.5};
    std::vector<SegmentRef> segs{{a.data(), 2, 0}, {b.data(), 2, -2}};
    auto out = consistent_scaling(segs);
    CHECK(out.exponent == -2);
    CHECK(a == std::vector<double>{0.25, 0.75});
    CHECK(b == std::vector<double>{0.5, 0.5});
    CHECK(!out.flagged);
}

TEST_CASE("consistent_scaling flags subnormal-driving rescales") {
    std::vector<double> a{1.0, 0.5}, b{1.0, 1.0};
    std::vector<SegmentRef> segs{{a.data(), 2, 0}, {b.data(), 2, -1200}};
    auto out = consistent_scaling(segs);
    CHECK(out.flagged);
    CHECK(out.exponent == -1200);
}

TEST_CASE("representation invariance of linear_update") {
    Philox rng(11);
    AugmentedTile x1(4, 1), y1(4, 1);
    DenseMatrix t(4, 4);
    for (std::size_t i = 0; i < 4; ++i) {
        x1.data(i, 0) = rng.uniform_sym();
        y1.data(i, 0) = rng.uniform_sym();
    }
    for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t i = 0; i < 4; ++i) t(i, j) = rng.uniform_sym();
    AugmentedTile x2 = x1, y2 = y1;
    // same represented value, different scaling
    rescale: {
        const double f = std::ldexp(1.0, 12);
        for (std::size_t i = 0; i < 4; ++i) x2.data(i, 0) *= f;
        x2.exponents[0] += 12;
    }
    linear_update(x1, y1, t);
    linear_update(x2, y2, t);
    // represented results equal bitwise after unifying the scale
    const std::int64_t d = y1.exponents[0] - y2.exponents[0];
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(y1.data(i, 0) == std::ldexp(y2.data(i, 0), static_cast<int>(d)));
}

TEST_CASE("protection on and off agree bitwise on benign input") {
    const std::size_t n = 120;
    ProblemSpec spec;
    spec.kind = ProblemKind::known_spectrum;
    spec.n = n;
    spec.seed = 13;
    auto gen = generate(spec);
    const std::size_t ts = default_tile_size(n);
    auto hr = hessenberg_reduce(TiledMatrix::from_dense(gen.a, n, n, ts), true);
    auto sd = schur_reduce(std::move(hr.h), std::move(hr.q));
    REQUIRE(sd.converged);
    auto sel = select_fraction(sd.s, 0.5, 3);
    EigvecOptions on;
    on.protection = true;
    EigvecOptions off;
    off.protection = false;
    auto e1 = solve_eigenvectors(sd.s, sel, on);
    auto e2 = solve_eigenvectors(sd.s, sel, off);
    CHECK(e1.columns == e2.columns);
}

TEST_CASE("backtransform with identity is bitwise") {
    std::vector<double> d{2, 1, 0, 3};
    TiledMatrix s = TiledMatrix::from_dense(d, 2, 2, 2);
    auto sel = select_eigenvalues(s, [](std::complex<double>) { return true; });
    auto ev = solve_eigenvectors(s, sel);
    auto bt = backtransform(ev, TiledMatrix::identity(2, 2));
    CHECK(bt.columns == ev.columns);
}

TEST_CASE("full pipeline eigenvectors satisfy A x = lambda x") {
    const std::size_t n = 100;
    ProblemSpec spec;
    spec.kind = ProblemKind::known_spectrum;
    spec.n = n;
    spec.seed = 23;
    auto gen = generate(spec);
    const std::size_t ts = default_tile_size(n);
    auto hr = hessenberg_reduce(TiledMatrix::from_dense(gen.a, n, n, ts), true);
    auto sd = schur_reduce(std::move(hr.h), std::move(hr.q));
    REQUIRE(sd.converged);
    auto sel = select_eigenvalues(sd.s, [](std::complex<double>) { return true; });
    auto ev = solve_eigenvectors(sd.s, sel);
    auto bt = backtransform(ev, *sd.q);

    verify::EigvecCheckInput in{gen.a, n,    std::vector<double>(), ev.lambdas.size(),
                                ev.lambdas, ev.col_kind,           1e-12};
    std::vector<double> cols(n * ev.lambdas.size());
    for (std::size_t j = 0; j < ev.lambdas.size(); ++j)
        for (std::size_t i = 0; i < n; ++i) cols[j * n + i] = bt.columns(i, j);
    verify::EigvecCheckInput chk{gen.a,      n,           cols, ev.lambdas.size(),
                                 ev.lambdas, ev.col_kind, 1e-12};
    auto rep = verify::verify_eigenvectors(chk);
    CHECK_MESSAGE(rep.pass, rep.to_json());
    (void)in;

    // conjugate-pair identity: A x_re = re(l) x_re - im(l) x_im is part of the
    // residual above; check one pair explicitly as well
    for (std::size_t j = 0; j < ev.lambdas.size(); ++j) {
        if (ev.col_kind[j] != 1) continue;
        const double lr = ev.lambdas[j].real(), li = ev.lambdas[j].imag();
        const double anorm = verify::inf_norm(gen.a, n);
        for (std::size_t i = 0; i < n; ++i) {
            double axr = 0.0, axi = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
                axr += gen.a[i * n + c] * bt.columns(c, j);
                axi += gen.a[i * n + c] * bt.columns(c, j + 1);
            }
            CHECK(std::fabs(axr - (lr * bt.columns(i, j) - li * bt.columns(i, j + 1))) <=
                  1e-12 * anorm);
            CHECK(std::fabs(axi - (li * bt.columns(i, j) + lr * bt.columns(i, j + 1))) <=
                  1e-12 * anorm);
        }
        break;
    }
}

TEST_CASE("solve residual bound holds across worker counts bitwise") {
    const std::size_t n = 80;
    ProblemSpec spec;
    spec.kind = ProblemKind::known_spectrum;
    spec.n = n;
    spec.seed = 31;
    auto gen = generate(spec);
    const std::size_t ts = 16;
    auto hr = hessenberg_reduce(TiledMatrix::from_dense(gen.a, n, n, ts), true);
    auto sd = schur_reduce(std::move(hr.h), std::move(hr.q));
    REQUIRE(sd.converged);
    auto sn = sd.s.to_dense();
    auto sel = select_fraction(sd.s, 0.35, 17);
    EigvecOptions o1;
    o1.workers = 1;
    auto e1 = solve_eigenvectors(sd.s, sel, o1);
    CHECK(schur_basis_residual(sn, n, e1) <= 64.0 * n * kEps);
    for (std::size_t w : {2u, 8u}) {
        EigvecOptions ow;
        ow.workers = w;
        ow.seed = w;
        auto ew = solve_eigenvectors(sd.s, sel, ow);
        CHECK(ew.columns == e1.columns);
    }
}
