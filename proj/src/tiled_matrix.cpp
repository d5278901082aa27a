//
// taskeig -- task-based dense nonsymmetric eigensolver
//
// SPDX-License-Identifier: BSD-3-Clause
//
#include "taskeig/tiled_matrix.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <stdexcept>

namespace taskeig {

namespace {
std::atomic<std::uint64_t> next_matrix_id{1};
}

TiledMatrix::TiledMatrix(std::size_t rows, std::size_t cols, std::size_t tile_size)
    : rows_(rows), cols_(cols), tile_size_(tile_size) {
    if (rows < 1 || cols < 1) throw std::invalid_argument("TiledMatrix: empty dimensions");
    if (tile_size < 2) throw std::invalid_argument("TiledMatrix: tile_size must be >= 2");
    grid_rows_ = (rows + tile_size - 1) / tile_size;
    grid_cols_ = (cols + tile_size - 1) / tile_size;
    id_ = next_matrix_id.fetch_add(1);
    tiles_.resize(grid_rows_ * grid_cols_);
    for (std::size_t ti = 0; ti < grid_rows_; ++ti) {
        for (std::size_t tj = 0; tj < grid_cols_; ++tj) {
            Tile& t = tiles_[ti * grid_cols_ + tj];
            t.rows = std::min(tile_size, rows - ti * tile_size);
            t.cols = std::min(tile_size, cols - tj * tile_size);
            t.data.assign(t.rows * t.cols, 0.0);
        }
    }
}

TiledMatrix TiledMatrix::from_dense(const std::vector<double>& data,
                                    std::size_t rows, std::size_t cols,
                                    std::size_t tile_size) {
    if (data.size() != rows * cols)
        throw std::invalid_argument("from_dense: data size does not match dimensions");
    TiledMatrix m(rows, cols, tile_size);
    for (std::size_t ti = 0; ti < m.grid_rows_; ++ti) {
        for (std::size_t tj = 0; tj < m.grid_cols_; ++tj) {
            Tile& t = m.tiles_[ti * m.grid_cols_ + tj];
            const std::size_t r0 = ti * tile_size, c0 = tj * tile_size;
            for (std::size_t j = 0; j < t.cols; ++j)
                for (std::size_t i = 0; i < t.rows; ++i)
                    t.at(i, j) = data[(r0 + i) * cols + (c0 + j)];
        }
    }
    return m;
}

TiledMatrix TiledMatrix::identity(std::size_t n, std::size_t tile_size) {
    TiledMatrix m(n, n, tile_size);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

std::vector<double> TiledMatrix::to_dense() const {
    std::vector<double> out(rows_ * cols_);
    for (std::size_t ti = 0; ti < grid_rows_; ++ti) {
        for (std::size_t tj = 0; tj < grid_cols_; ++tj) {
            const Tile& t = tiles_[ti * grid_cols_ + tj];
            const std::size_t r0 = ti * tile_size_, c0 = tj * tile_size_;
            for (std::size_t j = 0; j < t.cols; ++j)
                for (std::size_t i = 0; i < t.rows; ++i)
                    out[(r0 + i) * cols_ + (c0 + j)] = t.at(i, j);
        }
    }
    return out;
}

Tile& TiledMatrix::tile(std::size_t ti, std::size_t tj) {
    return tiles_[ti * grid_cols_ + tj];
}
const Tile& TiledMatrix::tile(std::size_t ti, std::size_t tj) const {
    return tiles_[ti * grid_cols_ + tj];
}

TileHandle TiledMatrix::handle(std::size_t ti, std::size_t tj) const {
    if (ti >= grid_rows_ || tj >= grid_cols_)
        throw std::invalid_argument("TiledMatrix::handle: tile index out of range");
    return TileHandle{id_, static_cast<std::uint32_t>(ti), static_cast<std::uint32_t>(tj)};
}

std::size_t TiledMatrix::tile_row_end(std::size_t ti) const {
    return std::min(rows_, (ti + 1) * tile_size_);
}
std::size_t TiledMatrix::tile_col_end(std::size_t tj) const {
    return std::min(cols_, (tj + 1) * tile_size_);
}

std::vector<WindowPart> TiledMatrix::window_view(std::size_t r0, std::size_t r1,
                                                 std::size_t c0, std::size_t c1) const {
    if (r0 >= r1 || c0 >= c1 || r1 > rows_ || c1 > cols_)
        throw std::invalid_argument("window_view: range out of bounds");
    std::vector<WindowPart> parts;
    const std::size_t ti0 = r0 / tile_size_, ti1 = (r1 - 1) / tile_size_;
    const std::size_t tj0 = c0 / tile_size_, tj1 = (c1 - 1) / tile_size_;
    for (std::size_t ti = ti0; ti <= ti1; ++ti) {
        const std::size_t tr0 = ti * tile_size_;
        const std::size_t lr0 = (r0 > tr0) ? r0 - tr0 : 0;
        const std::size_t lr1 = std::min(r1 - tr0, tile(ti, tj0).rows);
        for (std::size_t tj = tj0; tj <= tj1; ++tj) {
            const std::size_t tc0 = tj * tile_size_;
            const std::size_t lc0 = (c0 > tc0) ? c0 - tc0 : 0;
            const std::size_t lc1 = std::min(c1 - tc0, tile(ti, tj).cols);
            parts.push_back(WindowPart{handle(ti, tj), lr0, lr1, lc0, lc1});
        }
    }
    return parts;
}

std::vector<TileHandle> TiledMatrix::window_handles(std::size_t r0, std::size_t r1,
                                                    std::size_t c0, std::size_t c1) const {
    std::vector<TileHandle> hs;
    for (const auto& p : window_view(r0, r1, c0, c1)) hs.push_back(p.handle);
    return hs;
}

void TiledMatrix::gather(std::size_t r0, std::size_t r1, std::size_t c0,
                         std::size_t c1, DenseMatrix& out) const {
    if (out.rows() != r1 - r0 || out.cols() != c1 - c0)
        out = DenseMatrix(r1 - r0, c1 - c0);
    for (const auto& p : window_view(r0, r1, c0, c1)) {
        const Tile& t = tile(p.handle.ti, p.handle.tj);
        const std::size_t gr = p.handle.ti * tile_size_;
        const std::size_t gc = p.handle.tj * tile_size_;
        for (std::size_t j = p.col_begin; j < p.col_end; ++j)
            for (std::size_t i = p.row_begin; i < p.row_end; ++i)
                out(gr + i - r0, gc + j - c0) = t.at(i, j);
    }
}

void TiledMatrix::scatter(std::size_t r0, std::size_t r1, std::size_t c0,
                          std::size_t c1, const DenseMatrix& in) {
    if (in.rows() != r1 - r0 || in.cols() != c1 - c0)
        throw std::invalid_argument("scatter: block shape mismatch");
    for (const auto& p : window_view(r0, r1, c0, c1)) {
        Tile& t = tile(p.handle.ti, p.handle.tj);
        const std::size_t gr = p.handle.ti * tile_size_;
        const std::size_t gc = p.handle.tj * tile_size_;
        for (std::size_t j = p.col_begin; j < p.col_end; ++j)
            for (std::size_t i = p.row_begin; i < p.row_end; ++i)
                t.at(i, j) = in(gr + i - r0, gc + j - c0);
    }
}

double& TiledMatrix::at(std::size_t i, std::size_t j) {
    return tile(i / tile_size_, j / tile_size_).at(i % tile_size_, j % tile_size_);
}
double TiledMatrix::at(std::size_t i, std::size_t j) const {
    return tile(i / tile_size_, j / tile_size_).at(i % tile_size_, j % tile_size_);
}

bool TiledMatrix::equals_bitwise(const TiledMatrix& other) const {
    if (rows_ != other.rows_ || cols_ != other.cols_) return false;
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) {
            const double a = at(i, j), b = other.at(i, j);
            if (std::memcmp(&a, &b, sizeof a) != 0) return false;
        }
    return true;
}

std::size_t default_tile_size(std::size_t n) {
    if (n >= 1000) return 128;
    const std::size_t base = std::max<std::size_t>(32, n / 8);
    return ((base + 7) / 8) * 8;
}

} // namespace taskeig
