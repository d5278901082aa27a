//
// taskeig -- task-based dense nonsymmetric eigensolver
//
// SPDX-License-Identifier: BSD-3-Clause
//
#ifndef TASKEIG_EIGVEC_HPP
#define TASKEIG_EIGVEC_HPP

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "taskeig/dense.hpp"
#include "taskeig/reorder.hpp"
#include "taskeig/tiled_matrix.hpp"

namespace taskeig {

/// Power-of-two scaling factor alpha = 2^exponent. 64-bit exponents make
/// underflow of the factor itself a practical impossibility; the magnitude is
/// clamped to 2^62 to keep exponent arithmetic far from wrapping.
struct ScalingFactor {
    std::int64_t exponent = 0;
    static constexpr std::int64_t kMinExponent = -(std::int64_t{1} << 62);
};

/// Tile of eigenvector column segments with one scaling factor per column;
/// column j represents data(:,j) / 2^exponents[j].
struct AugmentedTile {
    DenseMatrix data;
    std::vector<std::int64_t> exponents;

    AugmentedTile() = default;
    AugmentedTile(std::size_t rows, std::size_t cols)
        : data(rows, cols), exponents(cols, 0) {}
};

inline constexpr double kOmega = 4.49423283715578976932326297697e307; // 2^1022

/// Consistently scales each column pair (x_j, y_j) to the minimum of the two
/// exponents and then rescales further until
/// ||y_j||_inf + ||T||_inf ||x_j||_inf <= Omega. Costs O(k n) norms only.
void protect_update(AugmentedTile& x, AugmentedTile& y, const DenseMatrix& t,
                    bool protection = true);

/// y <- <gamma, Z> representing beta^-1 y - alpha^-1 T x, computed after
/// protect_update as one matrix-matrix product plus subtraction.
void linear_update(const AugmentedTile& x, AugmentedTile& y, const DenseMatrix& t,
                   bool protection = true);

struct SegmentRef {
    double* data = nullptr;
    std::size_t len = 0;
    std::int64_t exponent = 0;
};

struct ConsistentScalingOutcome {
    std::int64_t exponent = 0;
    bool flagged = false; // a rescale drove a nonzero entry subnormal
};

/// Rescales all segments of one eigenvector to the minimum exponent; exact
/// power-of-two arithmetic, no rounding unless an entry goes subnormal.
ConsistentScalingOutcome consistent_scaling(std::span<SegmentRef> segments);

struct EigenvectorSet {
    std::size_t n = 0;
    std::vector<std::complex<double>> lambdas; // one per column
    std::vector<int> col_kind;                 // 0 real, 1 real part, 2 imag part
    std::vector<std::size_t> positions;        // diagonal position of the block
    DenseMatrix columns;                       // n x k, unit inf-norm, exponent 0
    std::vector<bool> flagged;                 // per column
};

struct EigvecOptions {
    std::size_t workers = 0;
    std::uint64_t seed = 0;
    bool protection = true; // false: identical arithmetic, guards disabled
};

/// Solves (S - lambda I) y = 0 for every selected eigenvalue with tiled,
/// overflow-protected backsubstitution over augmented tiles.
EigenvectorSet solve_eigenvectors(const TiledMatrix& s, const Selection& sel,
                                  const EigvecOptions& opts = {});

/// x = Q y per column, followed by the same normalization convention.
EigenvectorSet backtransform(const EigenvectorSet& y, const TiledMatrix& q,
                             const EigvecOptions& opts = {});

} // namespace taskeig

#endif
