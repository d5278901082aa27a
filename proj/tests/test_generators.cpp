#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "taskeig/generate.hpp"
#include "taskeig/philox.hpp"
#include "taskeig/verify.hpp"

using namespace taskeig;

TEST_CASE("philox4x32-10 known-answer vectors") {
    auto r0 = Philox::round10({0, 0, 0, 0}, {0, 0});
    CHECK(r0 == Philox::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    auto r1 = Philox::round10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                              {0xffffffffu, 0xffffffffu});
    CHECK(r1 == Philox::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
    auto r2 = Philox::round10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                              {0xa4093822u, 0x299f31d0u});
    CHECK(r2 == Philox::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("philox streams are deterministic and bounded") {
    Philox a(123), b(123);
    for (int i = 0; i < 1000; ++i) {
        const double x = a.uniform_sym();
        CHECK(x == b.uniform_sym());
        CHECK(x >= -1.0);
        CHECK(x <= 1.0);
    }
}

TEST_CASE("generate is deterministic by spec") {
    ProblemSpec spec;
    spec.kind = ProblemKind::random_uniform;
    spec.n = 10;
    spec.seed = 1;
    auto g1 = generate(spec);
    auto g2 = generate(spec);
    CHECK(g1.a == g2.a);
    spec.seed = 2;
    CHECK(generate(spec).a != g1.a);
}

TEST_CASE("known-spectrum 3x3 matches the char-poly oracle") {
    ProblemSpec spec;
    spec.kind = ProblemKind::known_spectrum;
    spec.n = 3;
    spec.seed = 7;
    spec.spectrum = {{1, 0}, {2, 0}, {3, 0}};
    auto g = generate(spec);
    auto roots = verify::charpoly_roots(g.a, 3);
    CHECK(verify::match_spectra(roots, g.true_spectrum) <= 1e-12);
}

TEST_CASE("known-spectrum with a complex pair") {
    ProblemSpec spec;
    spec.kind = ProblemKind::known_spectrum;
    spec.n = 4;
    spec.seed = 11;
    spec.spectrum = {{1, 0}, {2, 2}, {2, -2}, {-3, 0}};
    auto g = generate(spec);
    auto roots = verify::charpoly_roots(g.a, 4);
    CHECK(verify::match_spectra(roots, g.true_spectrum) <= 1e-11);
}

TEST_CASE("unpaired complex spectrum is rejected") {
    ProblemSpec spec;
    spec.kind = ProblemKind::known_spectrum;
    spec.n = 2;
    spec.spectrum = {{1, 1}, {2, 0}};
    CHECK_THROWS_AS(generate(spec), std::invalid_argument);
}

TEST_CASE("overflow-stress instance blows up the naive solve") {
    ProblemSpec spec;
    spec.kind = ProblemKind::overflow_stress;
    spec.n = 512;
    auto g = generate(spec);
    // naive backsubstitution for the trailing eigenvalue overflows
    auto y = verify::unprotected_eigvec_solve(g.a, g.n, g.n - 1);
    bool nonfinite = false;
    for (double v : y) nonfinite |= !std::isfinite(v);
    CHECK(nonfinite);
    // but the leading one is trivial
    auto y0 = verify::unprotected_eigvec_solve(g.a, g.n, 0);
    CHECK(y0[0] == 1.0);
}

TEST_CASE("default spectrum is conjugate-closed and well separated") {
    auto sp = default_spectrum(300, 3);
    REQUIRE(sp.size() == 300);
    double radius = 0.0;
    for (auto& z : sp) radius = std::fmax(radius, std::abs(z));
    double mingap = 1e300;
    for (std::size_t i = 0; i < sp.size(); ++i)
        for (std::size_t j = i + 1; j < sp.size(); ++j)
            mingap = std::fmin(mingap, std::abs(sp[i] - sp[j]));
    CHECK(mingap >= 1e-2 * radius);
}

TEST_CASE("spec JSON round trip") {
    ProblemSpec spec;
    spec.kind = ProblemKind::known_spectrum;
    spec.n = 5;
    spec.seed = 99;
    spec.spectrum = {{1, 0}, {2, 1}, {2, -1}, {0.5, 0}, {-1, 0}};
    auto back = ProblemSpec::from_json(spec.to_json());
    CHECK(back.kind == spec.kind);
    CHECK(back.n == spec.n);
    CHECK(back.seed == spec.seed);
    CHECK(back.spectrum == spec.spectrum);
    CHECK(generate(back).a == generate(spec).a);
}

TEST_CASE("verification report on identity inputs passes with zero metrics") {
    const std::size_t n = 4;
    std::vector<double> eye(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) eye[i * n + i] = 1.0;
    auto rep = verify::verify_schur({eye, eye, eye, n, 1e-14, 1e-14});
    CHECK(rep.pass);
    CHECK(rep.metrics.at("backward_error") == 0.0);
    CHECK(rep.metrics.at("orthogonality") == 0.0);
}

TEST_CASE("corrupted Q is detected") {
    const std::size_t n = 4;
    std::vector<double> eye(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) eye[i * n + i] = 1.0;
    auto q = eye;
    q[1] += 1e-3;
    auto rep = verify::verify_schur({eye, q, eye, n, 1e-10, 1e-10});
    CHECK(!rep.pass);
    CHECK(rep.metrics.at("orthogonality") == doctest::Approx(1e-3).epsilon(0.3));
}

TEST_CASE("greedy spectrum matching reports the worst pairing") {
    CHECK(verify::match_spectra({{1, 0}, {2, 0}}, {{2.0001, 0}, {1, 0}}) ==
          doctest::Approx(1e-4).epsilon(1e-6));
    CHECK(std::isinf(verify::match_spectra({{1, 0}}, {})));
}

TEST_CASE("xdouble arithmetic tracks huge dynamic range") {
    using verify::XDouble;
    auto a = verify::xmul(XDouble::from(1e300), XDouble::from(1e300));
    CHECK(a.log2_abs() == doctest::Approx(2.0 * std::log2(1e300)).epsilon(1e-12));
    auto b = verify::xdiv(XDouble::from(1.0), a);
    CHECK(b.log2_abs() == doctest::Approx(-2.0 * std::log2(1e300)).epsilon(1e-12));
    auto c = verify::xsub(XDouble::from(3.0), XDouble::from(2.0));
    CHECK(c.frac * std::ldexp(1.0, static_cast<int>(c.exp)) == 1.0);
}
