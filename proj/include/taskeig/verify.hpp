//
// taskeig -- task-based dense nonsymmetric eigensolver
//
// SPDX-License-Identifier: BSD-3-Clause
//
#ifndef TASKEIG_VERIFY_HPP
#define TASKEIG_VERIFY_HPP

#include <complex>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace taskeig::verify {

/// Independent verification oracles. Everything here is deliberately written
/// as plain dense triple-loop code, sharing no kernels with the phases it
/// checks.

// row-major n x n helpers
double frob_norm(const std::vector<double>& a, std::size_t n);
double inf_norm(const std::vector<double>& a, std::size_t n);

/// || A - Q S Q^T ||_F / ||A||_F
double similarity_residual(const std::vector<double>& a, const std::vector<double>& q,
                           const std::vector<double>& s, std::size_t n);
/// || Q^T Q - I ||_F
double orthogonality_defect(const std::vector<double>& q, std::size_t n);

bool is_hessenberg(const std::vector<double>& h, std::size_t n);
/// exact zeros below the quasi-triangular profile, standardized 2x2 blocks
bool is_standardized_quasi_triangular(const std::vector<double>& s, std::size_t n,
                                      std::string* why = nullptr);

/// Diagonal read-off of a quasi-triangular matrix (independent of kernels).
std::vector<std::complex<double>> read_eigenvalues(const std::vector<double>& s,
                                                   std::size_t n);

/// Greedy minimal-distance bipartite matching; returns the maximum matched
/// distance (infinity on size mismatch).
double match_spectra(std::vector<std::complex<double>> a,
                     std::vector<std::complex<double>> b);

/// Characteristic polynomial roots for n <= 4 via Leverrier coefficients and
/// Durand-Kerner iteration.
std::vector<std::complex<double>> charpoly_roots(const std::vector<double>& m,
                                                 std::size_t n);

/// One unblocked multishift sweep applied reflector-by-reflector to the full
/// dense matrix: the oracle for the windowed bulge chase. Shifts must be
/// conjugate-closed; q accumulates the similarity.
void reference_unblocked_sweep(std::vector<double>& h, std::vector<double>& q,
                               std::size_t n,
                               const std::vector<std::complex<double>>& shifts);

/// Naive backsubstitution for (S - lambda I) y = 0 with y[pos] = 1 and zeros
/// below; no scaling, no protection. May produce non-finite values: that is
/// the point. Real eigenvalue only.
std::vector<double> unprotected_eigvec_solve(const std::vector<double>& s,
                                             std::size_t n, std::size_t pos);

// ------------------------------------------------------------------ //
// Extended-exponent scalar arithmetic: value = frac * 2^exp with frac in
// [1, 2) (or 0). Used to evaluate growth-prone recurrences exactly enough to
// check the protected solvers.
struct XDouble {
    double frac = 0.0;
    std::int64_t exp = 0;

    static XDouble from(double v);
    double log2_abs() const;
    bool is_zero() const { return frac == 0.0; }
};
XDouble xadd(XDouble a, XDouble b);
XDouble xsub(XDouble a, XDouble b);
XDouble xmul(XDouble a, XDouble b);
XDouble xdiv(XDouble a, XDouble b);

/// Backsubstitution of the triangular part of (T - shift I) y = b in
/// extended-exponent arithmetic (1x1 pivots; T must be triangular).
std::vector<XDouble> xdouble_triangular_solve(const std::vector<double>& t,
                                              std::size_t n, double shift,
                                              const std::vector<double>& b);

// ------------------------------------------------------------------ //

struct VerificationReport {
    std::map<std::string, double> metrics;
    std::map<std::string, double> tolerances;
    std::vector<std::string> failures;
    bool pass = true;

    void check(const std::string& name, double value, double tol);
    void check_flag(const std::string& name, bool ok);
    std::string to_json() const;
};

struct SchurCheckInput {
    const std::vector<double>& a;
    const std::vector<double>& q;
    const std::vector<double>& s;
    std::size_t n;
    double tol_backward;
    double tol_orth;
};
VerificationReport verify_schur(const SchurCheckInput& in);

VerificationReport verify_hessenberg(const std::vector<double>& a,
                                     const std::vector<double>& q,
                                     const std::vector<double>& h, std::size_t n,
                                     double tol_backward, double tol_orth);

/// Columns of x are eigenvectors of a (real: one column; pair: re, im).
struct EigvecCheckInput {
    const std::vector<double>& a; // n x n
    std::size_t n;
    const std::vector<double>& x; // n x k column-major
    std::size_t k;
    const std::vector<std::complex<double>>& lambdas; // one per column
    const std::vector<int>& col_kind; // 0 real, 1 re-part, 2 im-part
    double tol;
};
VerificationReport verify_eigenvectors(const EigvecCheckInput& in);

} // namespace taskeig::verify

#endif
