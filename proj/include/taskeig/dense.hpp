//
// taskeig -- task-based dense nonsymmetric eigensolver
//
// SPDX-License-Identifier: BSD-3-Clause
//
#ifndef TASKEIG_DENSE_HPP
#define TASKEIG_DENSE_HPP

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

namespace taskeig {

/// Column-major dense matrix used for scratch windows, accumulators and
/// small kernel workspaces. Owns its storage.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) {
        assert(i < rows_ && j < cols_);
        return data_[j * rows_ + i];
    }
    double operator()(std::size_t i, std::size_t j) const {
        assert(i < rows_ && j < cols_);
        return data_[j * rows_ + i];
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* col(std::size_t j) { return data_.data() + j * rows_; }
    const double* col(std::size_t j) const { return data_.data() + j * rows_; }

    void fill(double v) { data_.assign(data_.size(), v); }

    bool operator==(const DenseMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

namespace blas {

// Deterministic triple-loop kernels, column-major with explicit leading
// dimensions. Accumulation order is fixed (k innermost, ascending) so results
// are bitwise reproducible regardless of caller threading.

/// C(m x n) += alpha * op(A) * op(B), op in {none, transpose}.
inline void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
                 std::size_t k, double alpha, const double* a, std::size_t lda,
                 const double* b, std::size_t ldb, double* c, std::size_t ldc) {
    if (m == 0 || n == 0) return;
    for (std::size_t j = 0; j < n; ++j) {
        double* cj = c + j * ldc;
        for (std::size_t p = 0; p < k; ++p) {
            const double bjp = trans_b ? b[p * ldb + j] : b[j * ldb + p];
            const double s = alpha * bjp;
            if (s == 0.0) continue;
            if (!trans_a) {
                const double* ap = a + p * lda;
                for (std::size_t i = 0; i < m; ++i) cj[i] += s * ap[i];
            } else {
                for (std::size_t i = 0; i < m; ++i) cj[i] += s * a[i * lda + p];
            }
        }
    }
}

/// y(m) += alpha * op(A) * x
inline void gemv(bool trans_a, std::size_t m, std::size_t k, double alpha,
                 const double* a, std::size_t lda, const double* x, double* y) {
    if (!trans_a) {
        for (std::size_t p = 0; p < k; ++p) {
            const double s = alpha * x[p];
            if (s == 0.0) continue;
            const double* ap = a + p * lda;
            for (std::size_t i = 0; i < m; ++i) y[i] += s * ap[i];
        }
    } else {
        // y has length k here: y += alpha * A^T x, A is m x k
        for (std::size_t p = 0; p < k; ++p) {
            const double* ap = a + p * lda;
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) acc += ap[i] * x[i];
            y[p] += alpha * acc;
        }
    }
}

inline double dot(std::size_t n, const double* x, const double* y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

inline double nrm2(std::size_t n, const double* x) {
    // scaled two-pass norm, safe against overflow for large entries
    double mx = 0.0;
    for (std::size_t i = 0; i < n; ++i) mx = std::fmax(mx, std::fabs(x[i]));
    if (mx == 0.0) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = x[i] / mx;
        acc += t * t;
    }
    return mx * std::sqrt(acc);
}

inline double norm_inf(std::size_t n, const double* x) {
    double mx = 0.0;
    for (std::size_t i = 0; i < n; ++i) mx = std::fmax(mx, std::fabs(x[i]));
    return mx;
}

} // namespace blas

inline double frobenius_norm(const DenseMatrix& a) {
    return blas::nrm2(a.rows() * a.cols(), a.data());
}

/// max_i sum_j |a_ij|
inline double norm_inf(const DenseMatrix& a) {
    double mx = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += std::fabs(a(i, j));
        mx = std::fmax(mx, s);
    }
    return mx;
}

} // namespace taskeig

#endif
