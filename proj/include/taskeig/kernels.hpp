//
// taskeig -- task-based dense nonsymmetric eigensolver
//
// SPDX-License-Identifier: BSD-3-Clause
//
#ifndef TASKEIG_KERNELS_HPP
#define TASKEIG_KERNELS_HPP

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "taskeig/dense.hpp"

namespace taskeig::kernels {

/// Small sequential dense kernels executed inside tasks. All functions here
/// are pure with respect to their arguments and safe to run concurrently on
/// disjoint data.

// ---------------------------------------------------------------------- //
// Householder reflectors

/// I - tau v v^T with v[0] == 1 stored explicitly. tau == 0 is the identity.
struct Reflector {
    std::vector<double> v;
    double tau = 0.0;
};

/// Builds a reflector with (I - tau v v^T) x = beta e1, |beta| = ||x||2,
/// beta = -sign(x1) ||x|| to avoid cancellation. Zero input gives tau = 0.
std::pair<Reflector, double> make_reflector(std::span<const double> x);

/// A(rows r0..r0+len) <- (I - tau v v^T) A for columns [c0, c1).
void apply_reflector_left(DenseMatrix& a, const Reflector& h, std::size_t r0,
                          std::size_t c0, std::size_t c1);
/// A(cols c0..c0+len) <- A (I - tau v v^T) for rows [r0, r1).
void apply_reflector_right(DenseMatrix& a, const Reflector& h, std::size_t c0,
                           std::size_t r0, std::size_t r1);

// ---------------------------------------------------------------------- //
// Givens rotations

/// Plane rotation acting on indices (i, j):
///   [ c  s ] [x_i]   applied on the left; right application uses the
///   [-s  c ] [x_j]   transpose so that left+right form a similarity.
struct GivensRotation {
    double c = 1.0;
    double s = 0.0;
    std::size_t i = 0;
    std::size_t j = 0;
};

/// c*a + s*b = r, -s*a + c*b = 0.
GivensRotation make_givens(double a, double b, std::size_t i, std::size_t j);

void apply_givens_left(DenseMatrix& a, const GivensRotation& g, std::size_t c0,
                       std::size_t c1);
void apply_givens_right(DenseMatrix& a, const GivensRotation& g, std::size_t r0,
                        std::size_t r1);

// ---------------------------------------------------------------------- //
// 2x2 standardization (the DLANV2 role)

struct Standardized2x2 {
    GivensRotation rotation;           // similarity bringing the block to standard form
    double a, b, c, d;                 // standardized entries, c == 0 for real pair
    std::complex<double> lambda1, lambda2;
};

/// Orthogonal similarity of a 2x2 block to standard form: either upper
/// triangular (real eigenvalues) or equal diagonal with opposite-sign
/// off-diagonal entries (complex conjugate pair). Eigenvalues preserved.
Standardized2x2 standardize_2x2(double a, double b, double c, double d);

// ---------------------------------------------------------------------- //
// Small-problem solvers

/// Unblocked Householder reduction to upper Hessenberg form. q is overwritten
/// with the accumulated similarity (m = q h q^T for the input m).
void small_hessenberg(DenseMatrix& m, DenseMatrix& q);

struct SmallSchurResult {
    bool converged = true;
    std::size_t sweeps = 0;
};

/// Double-implicit-shift Francis QR on an upper Hessenberg matrix. h is
/// overwritten with the real Schur form (standardized blocks, exact zeros
/// below the quasi-triangular profile); the similarity is accumulated into q
/// from the right. Gives up after 30*k sweeps.
SmallSchurResult small_schur(DenseMatrix& h, DenseMatrix& q);

/// Diagonal block structure of a quasi-triangular matrix.
struct DiagBlock {
    std::size_t start = 0;
    std::size_t size = 1; // 1 or 2
    double re = 0.0;      // eigenvalue (pair has +imag here)
    double im = 0.0;
};
std::vector<DiagBlock> scan_diag_blocks(const DenseMatrix& s);

// ---------------------------------------------------------------------- //
// Adjacent block swap (direct method)

enum class SwapStatus { ok, rejected };

/// Swaps two adjacent diagonal blocks of sizes p,q in {1,2} located at the
/// top of `window` (a (p+q)x(p+q) view copy). On success the window holds the
/// swapped standardized form and the (p+q)-sized orthogonal factor is
/// multiplied into `acc` columns [off, off+p+q). Ill-conditioned swaps are
/// rejected and leave everything unchanged.
SwapStatus swap_adjacent_blocks(DenseMatrix& s, DenseMatrix& acc,
                                std::size_t pos, std::size_t p, std::size_t q);

// ---------------------------------------------------------------------- //
// Protected (overflow-aware) small solves

inline constexpr double kOverflowGuard = 4.49423283715578976932326297697e307; // 2^1022

struct ProtectedSolveResult {
    std::int64_t scale_exponent = 0; // alpha' = 2^scale_exponent (relative)
    bool perturbed_pivot = false;
};

/// Solves (T - shift I) x = alpha' * b in place over one real column
/// (imag == nullptr) or a real/imaginary pair sharing a scaling factor.
/// T is k x k quasi-triangular; only the leading `len` rows participate.
/// All intermediates stay finite; the returned exponent is the power of two
/// relating x to the incoming right-hand side.
ProtectedSolveResult protected_small_solve(const DenseMatrix& t, double shift_re,
                                           double shift_im, double* col_re,
                                           double* col_im, std::size_t len);

} // namespace taskeig::kernels

#endif
