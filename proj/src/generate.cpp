//
// taskeig -- task-based dense nonsymmetric eigensolver
//
// SPDX-License-Identifier: BSD-3-Clause
//
#include "taskeig/generate.hpp"

#include <cmath>
#include <stdexcept>

#include "taskeig/philox.hpp"

#include <json.hpp>

namespace taskeig {

const char* to_string(ProblemKind k) {
    switch (k) {
        case ProblemKind::random_uniform: return "random-uniform";
        case ProblemKind::known_spectrum: return "known-spectrum";
        case ProblemKind::overflow_stress: return "overflow-stress";
        case ProblemKind::perfect_shift: return "perfect-shift";
        case ProblemKind::hessenberg_random: return "hessenberg-random";
    }
    return "?";
}

ProblemKind problem_kind_from_string(const std::string& s) {
    if (s == "random-uniform") return ProblemKind::random_uniform;
    if (s == "known-spectrum") return ProblemKind::known_spectrum;
    if (s == "overflow-stress") return ProblemKind::overflow_stress;
    if (s == "perfect-shift") return ProblemKind::perfect_shift;
    if (s == "hessenberg-random") return ProblemKind::hessenberg_random;
    throw std::invalid_argument("unknown problem kind: " + s);
}

std::string ProblemSpec::to_json() const {
    nlohmann::json j;
    j["kind"] = to_string(kind);
    j["n"] = n;
    j["seed"] = seed;
    if (!spectrum.empty()) {
        nlohmann::json sp = nlohmann::json::array();
        for (const auto& z : spectrum) sp.push_back({z.real(), z.imag()});
        j["spectrum"] = sp;
    }
    if (kind == ProblemKind::overflow_stress) {
        j["growth_diag_step"] = growth_diag_step;
        j["growth_offdiag"] = growth_offdiag;
    }
    return j.dump(2);
}

ProblemSpec ProblemSpec::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    ProblemSpec s;
    s.kind = problem_kind_from_string(j.at("kind").get<std::string>());
    s.n = j.at("n").get<std::size_t>();
    s.seed = j.value("seed", 0ull);
    if (j.contains("spectrum"))
        for (const auto& z : j["spectrum"])
            s.spectrum.emplace_back(z[0].get<double>(), z[1].get<double>());
    s.growth_diag_step = j.value("growth_diag_step", 1e-7);
    s.growth_offdiag = j.value("growth_offdiag", 1e8);
    return s;
}

std::vector<std::complex<double>> default_spectrum(std::size_t n, std::uint64_t seed) {
    std::vector<std::complex<double>> sp;
    Philox rng(seed ^ 0x5cec7a1ull);
    // half real values evenly spread, rest conjugate pairs on a few bands;
    // the layout keeps eigenvalues well separated
    std::size_t npairs = n / 4;
    std::size_t nreal = n - 2 * npairs;
    for (std::size_t i = 0; i < nreal; ++i) {
        const double re = (nreal == 1) ? 1.0
                                       : -10.0 + 20.0 * static_cast<double>(i) /
                                                     static_cast<double>(nreal - 1);
        sp.emplace_back(re, 0.0);
    }
    for (std::size_t i = 0; i < npairs; ++i) {
        const double re = (npairs == 1) ? 0.5
                                        : -9.7 + 19.4 * static_cast<double>(i) /
                                                      static_cast<double>(npairs - 1);
        const double im = 1.0 + 2.0 * static_cast<double>(i % 3);
        sp.emplace_back(re, im);
        sp.emplace_back(re, -im);
    }
    (void)rng;
    return sp;
}

namespace {

void check_conjugate_closed(const std::vector<std::complex<double>>& sp) {
    std::vector<bool> used(sp.size(), false);
    for (std::size_t i = 0; i < sp.size(); ++i) {
        if (used[i] || sp[i].imag() == 0.0) continue;
        bool found = false;
        for (std::size_t j = i + 1; j < sp.size(); ++j) {
            if (used[j]) continue;
            if (sp[j].real() == sp[i].real() && sp[j].imag() == -sp[i].imag()) {
                used[i] = used[j] = true;
                found = true;
                break;
            }
        }
        if (!found)
            throw std::invalid_argument("spectrum has an unpaired complex value");
    }
}

/// Quasi-triangular S0 with the requested spectrum on the diagonal and
/// uniform [-1,1] strictly-upper fill.
std::vector<double> build_quasi_triangular(const std::vector<std::complex<double>>& sp,
                                           Philox& rng, std::size_t n) {
    std::vector<double> s(n * n, 0.0);
    // order: reals first as given, pairs as adjacent 2x2 blocks
    std::size_t pos = 0;
    std::vector<bool> used(sp.size(), false);
    for (std::size_t i = 0; i < sp.size(); ++i) {
        if (used[i]) continue;
        if (sp[i].imag() == 0.0) {
            s[pos * n + pos] = sp[i].real();
            pos += 1;
        } else {
            for (std::size_t j = i + 1; j < sp.size(); ++j)
                if (!used[j] && sp[j].real() == sp[i].real() &&
                    sp[j].imag() == -sp[i].imag()) {
                    used[j] = true;
                    break;
                }
            const double a = sp[i].real();
            const double b = std::fabs(sp[i].imag());
            s[pos * n + pos] = a;
            s[pos * n + pos + 1] = b;
            s[(pos + 1) * n + pos] = -b;
            s[(pos + 1) * n + pos + 1] = a;
            pos += 2;
        }
        used[i] = true;
    }
    // strictly upper fill outside the diagonal blocks
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool in_block = (j == i + 1) && (s[(i + 1) * n + i] != 0.0);
            if (!in_block && s[i * n + j] == 0.0) s[i * n + j] = rng.uniform_sym();
        }
    return s;
}

/// A <- H A H with H = I - 2 u u^T / (u^T u); plain dense application.
void apply_random_reflector_similarity(std::vector<double>& a, std::size_t n,
                                       Philox& rng) {
    std::vector<double> u(n);
    double nrm2 = 0.0;
    for (auto& e : u) {
        e = rng.uniform_sym();
        nrm2 += e * e;
    }
    if (nrm2 == 0.0) return;
    const double scal = 2.0 / nrm2;
    // left: A <- A - u (scal u^T A)
    std::vector<double> w(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) w[j] += u[i] * a[i * n + j];
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a[i * n + j] -= scal * u[i] * w[j];
    // right: A <- A - (A u scal) u^T
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) w[i] += a[i * n + j] * u[j];
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a[i * n + j] -= scal * w[i] * u[j];
}

} // namespace

GeneratedProblem generate(const ProblemSpec& spec) {
    if (spec.n < 1) throw std::invalid_argument("generate: n must be >= 1");
    GeneratedProblem out;
    out.n = spec.n;
    const std::size_t n = spec.n;
    Philox rng(spec.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(spec.kind));

    switch (spec.kind) {
        case ProblemKind::random_uniform: {
            out.a.resize(n * n);
            for (auto& e : out.a) e = rng.uniform_sym();
            break;
        }
        case ProblemKind::hessenberg_random: {
            out.a.assign(n * n, 0.0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = (i == 0 ? 0 : i - 1); j < n; ++j)
                    out.a[i * n + j] = rng.uniform_sym();
            break;
        }
        case ProblemKind::known_spectrum:
        case ProblemKind::perfect_shift: {
            auto sp = spec.spectrum.empty() ? default_spectrum(n, spec.seed)
                                            : spec.spectrum;
            if (sp.size() != n)
                throw std::invalid_argument("generate: spectrum size must equal n");
            check_conjugate_closed(sp);
            out.a = build_quasi_triangular(sp, rng, n);
            for (std::size_t k = 0; k < n; ++k)
                apply_random_reflector_similarity(out.a, n, rng);
            out.true_spectrum = sp;
            if (spec.kind == ProblemKind::perfect_shift) {
                // designate the first conjugate pair, or the first two reals
                for (std::size_t i = 0; i < sp.size(); ++i)
                    if (sp[i].imag() > 0.0) {
                        out.designated_shifts = {sp[i], std::conj(sp[i])};
                        break;
                    }
                if (out.designated_shifts.empty() && n >= 2)
                    out.designated_shifts = {sp[0], sp[1]};
            }
            break;
        }
        case ProblemKind::overflow_stress: {
            out.a.assign(n * n, 0.0);
            for (std::size_t k = 0; k < n; ++k) {
                out.a[k * n + k] = 1.0 + static_cast<double>(k) * spec.growth_diag_step;
                if (k + 1 < n) out.a[k * n + k + 1] = spec.growth_offdiag;
                out.true_spectrum.emplace_back(out.a[k * n + k], 0.0);
            }
            break;
        }
    }
    return out;
}

} // namespace taskeig
