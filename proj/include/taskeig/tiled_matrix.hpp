//
// taskeig -- task-based dense nonsymmetric eigensolver
//
// SPDX-License-Identifier: BSD-3-Clause
//
#ifndef TASKEIG_TILED_MATRIX_HPP
#define TASKEIG_TILED_MATRIX_HPP

#include <cstdint>
#include <vector>

#include "taskeig/dense.hpp"

namespace taskeig {

/// Identifies one tile of one registered matrix. Stable for the lifetime of
/// the matrix; used by the runtime as the unit of dependency tracking.
struct TileHandle {
    std::uint64_t matrix_id = 0;
    std::uint32_t ti = 0;
    std::uint32_t tj = 0;

    friend bool operator==(const TileHandle&, const TileHandle&) = default;
    friend auto operator<=>(const TileHandle&, const TileHandle&) = default;
};

/// One square (or edge-truncated) tile, column-major at its true size.
struct Tile {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    double& at(std::size_t i, std::size_t j) { return data[j * rows + i]; }
    double at(std::size_t i, std::size_t j) const { return data[j * rows + i]; }
};

/// Entry of a window decomposition: the tile plus the half-open local
/// row/column ranges the window covers inside it.
struct WindowPart {
    TileHandle handle;
    std::size_t row_begin, row_end;
    std::size_t col_begin, col_end;
};

/// Dense real matrix partitioned into square tiles. Edge tiles are stored at
/// their true (smaller) size. Tiles are column-major internally; the
/// dense interchange format is row-major.
class TiledMatrix {
public:
    TiledMatrix(std::size_t rows, std::size_t cols, std::size_t tile_size);

    static TiledMatrix from_dense(const std::vector<double>& data,
                                  std::size_t rows, std::size_t cols,
                                  std::size_t tile_size);
    static TiledMatrix identity(std::size_t n, std::size_t tile_size);

    std::vector<double> to_dense() const;

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t tile_size() const { return tile_size_; }
    std::size_t grid_rows() const { return grid_rows_; }
    std::size_t grid_cols() const { return grid_cols_; }
    std::uint64_t id() const { return id_; }

    Tile& tile(std::size_t ti, std::size_t tj);
    const Tile& tile(std::size_t ti, std::size_t tj) const;

    TileHandle handle(std::size_t ti, std::size_t tj) const;

    /// Decomposes a half-open window [r0,r1) x [c0,c1) into per-tile parts.
    std::vector<WindowPart> window_view(std::size_t r0, std::size_t r1,
                                        std::size_t c0, std::size_t c1) const;

    /// Handles of all tiles intersecting the window.
    std::vector<TileHandle> window_handles(std::size_t r0, std::size_t r1,
                                           std::size_t c0, std::size_t c1) const;

    /// Copies the window into / out of a dense scratch block.
    void gather(std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1,
                DenseMatrix& out) const;
    void scatter(std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1,
                 const DenseMatrix& in);

    double& at(std::size_t i, std::size_t j);
    double at(std::size_t i, std::size_t j) const;

    std::size_t tile_row_of(std::size_t i) const { return i / tile_size_; }
    std::size_t tile_col_of(std::size_t j) const { return j / tile_size_; }
    /// Global row index where tile row ti starts.
    std::size_t tile_row_begin(std::size_t ti) const { return ti * tile_size_; }
    std::size_t tile_row_end(std::size_t ti) const;
    std::size_t tile_col_begin(std::size_t tj) const { return tj * tile_size_; }
    std::size_t tile_col_end(std::size_t tj) const;

    bool equals_bitwise(const TiledMatrix& other) const;

private:
    std::size_t rows_, cols_, tile_size_;
    std::size_t grid_rows_, grid_cols_;
    std::uint64_t id_;
    std::vector<Tile> tiles_;
};

/// tile_size = 128 for n >= 1000, otherwise max(32, n/8) rounded to a
/// multiple of 8. A tiny tile size costs too much scheduling overhead.
std::size_t default_tile_size(std::size_t n);

} // namespace taskeig

#endif
