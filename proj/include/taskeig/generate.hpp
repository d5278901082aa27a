//
// taskeig -- task-based dense nonsymmetric eigensolver
//
// SPDX-License-Identifier: BSD-3-Clause
//
#ifndef TASKEIG_GENERATE_HPP
#define TASKEIG_GENERATE_HPP

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace taskeig {

enum class ProblemKind {
    random_uniform,   // entries uniform over [-1, 1]
    known_spectrum,   // A = Q0 S0 Q0^T with prescribed eigenvalues
    overflow_stress,  // bidiagonal growth family for robustness tests
    perfect_shift,    // known spectrum with a designated exact shift pair
    hessenberg_random // random upper Hessenberg
};

const char* to_string(ProblemKind k);
ProblemKind problem_kind_from_string(const std::string& s);

struct ProblemSpec {
    ProblemKind kind = ProblemKind::random_uniform;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::vector<std::complex<double>> spectrum; // optional; pairs conjugate-closed
    double growth_diag_step = 1e-7;             // overflow-stress parameters
    double growth_offdiag = 1e8;

    std::string to_json() const;
    static ProblemSpec from_json(const std::string& text);
};

struct GeneratedProblem {
    std::size_t n = 0;
    std::vector<double> a; // row-major
    std::vector<std::complex<double>> true_spectrum;      // empty if unknown
    std::vector<std::complex<double>> designated_shifts;  // perfect-shift kind
};

/// Deterministic by spec: same spec, bitwise-identical matrix.
GeneratedProblem generate(const ProblemSpec& spec);

/// Well-separated default spectrum (minimum gap >= 1e-2 * spectral radius
/// for the sizes exercised in the tests), mixing real values and conjugate
/// pairs; conjugate-closed.
std::vector<std::complex<double>> default_spectrum(std::size_t n, std::uint64_t seed);

} // namespace taskeig

#endif
