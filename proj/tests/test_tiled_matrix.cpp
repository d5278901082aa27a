#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <set>

#include "taskeig/io.hpp"
#include "taskeig/philox.hpp"
#include "taskeig/tiled_matrix.hpp"

using namespace taskeig;

namespace {
std::vector<double> random_dense(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Philox rng(seed);
    std::vector<double> d(rows * cols);
    for (auto& e : d) e = rng.uniform_sym();
    return d;
}
} // namespace

TEST_CASE("from_dense degenerate 1x1") {
    TiledMatrix m = TiledMatrix::from_dense({42.0}, 1, 1, 4);
    CHECK(m.grid_rows() == 1);
    CHECK(m.grid_cols() == 1);
    CHECK(m.tile(0, 0).rows == 1);
    CHECK(m.tile(0, 0).cols == 1);
    CHECK(m.at(0, 0) == 42.0);
}

TEST_CASE("5x5 with tile_size 2 has 3x3 grid with unit edge tiles") {
    auto d = random_dense(5, 5, 1);
    TiledMatrix m = TiledMatrix::from_dense(d, 5, 5, 2);
    CHECK(m.grid_rows() == 3);
    CHECK(m.grid_cols() == 3);
    CHECK(m.tile(2, 2).rows == 1);
    CHECK(m.tile(2, 2).cols == 1);
    CHECK(m.tile(0, 2).cols == 1);
    CHECK(m.tile(0, 2).rows == 2);
}

TEST_CASE("identity to_dense layout") {
    TiledMatrix m = TiledMatrix::identity(3, 2);
    CHECK(m.to_dense() == std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1});
}

TEST_CASE("single tile 2x2 row-major layout") {
    TiledMatrix m = TiledMatrix::from_dense({1, 2, 3, 4}, 2, 2, 4);
    CHECK(m.to_dense() == std::vector<double>{1, 2, 3, 4});
    CHECK(m.at(0, 1) == 2.0);
    CHECK(m.at(1, 0) == 3.0);
}

TEST_CASE("round trip is bitwise exact") {
    for (auto [rows, cols, ts, seed] :
         {std::tuple<std::size_t, std::size_t, std::size_t, std::uint64_t>{100, 100, 17, 7},
          {64, 64, 8, 3},
          {33, 65, 16, 9},
          {5, 200, 13, 11}}) {
        auto d = random_dense(rows, cols, seed);
        auto back = TiledMatrix::from_dense(d, rows, cols, ts).to_dense();
        CHECK(back == d);
    }
}

TEST_CASE("from_dense rejects bad arguments") {
    CHECK_THROWS_AS(TiledMatrix::from_dense({1, 2}, 2, 2, 4), std::invalid_argument);
    CHECK_THROWS_AS(TiledMatrix(0, 3, 4), std::invalid_argument);
    CHECK_THROWS_AS(TiledMatrix(3, 3, 1), std::invalid_argument);
}

TEST_CASE("window inside one tile") {
    TiledMatrix m(8, 8, 4);
    auto parts = m.window_view(0, 2, 0, 2);
    REQUIRE(parts.size() == 1);
    CHECK(parts[0].handle == m.handle(0, 0));
    CHECK(parts[0].row_begin == 0);
    CHECK(parts[0].row_end == 2);
    CHECK(parts[0].col_begin == 0);
    CHECK(parts[0].col_end == 2);
}

TEST_CASE("window straddling a tile corner") {
    TiledMatrix m(8, 8, 4);
    auto parts = m.window_view(3, 5, 3, 5);
    REQUIRE(parts.size() == 4);
    std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
    for (const auto& p : parts) seen.insert({p.handle.ti, p.handle.tj});
    CHECK(seen == std::set<std::pair<std::uint32_t, std::uint32_t>>{
                      {0, 0}, {0, 1}, {1, 0}, {1, 1}});
}

TEST_CASE("window_view rejects out-of-bounds ranges") {
    TiledMatrix m(8, 8, 4);
    CHECK_THROWS_AS(m.window_view(0, 9, 0, 2), std::invalid_argument);
    CHECK_THROWS_AS(m.window_view(2, 2, 0, 2), std::invalid_argument);
}

TEST_CASE("random windows cover exactly their area without overlap") {
    Philox rng(5150);
    TiledMatrix m(97, 83, 7);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t r0 = rng.bounded(96);
        const std::size_t r1 = r0 + 1 + rng.bounded(97 - r0 - 1 + 1);
        const std::size_t c0 = rng.bounded(82);
        const std::size_t c1 = c0 + 1 + rng.bounded(83 - c0 - 1 + 1);
        auto parts = m.window_view(r0, r1, c0, c1);
        std::set<std::pair<std::size_t, std::size_t>> covered;
        std::size_t area = 0;
        for (const auto& p : parts) {
            const std::size_t gr = p.handle.ti * m.tile_size();
            const std::size_t gc = p.handle.tj * m.tile_size();
            for (std::size_t i = p.row_begin; i < p.row_end; ++i)
                for (std::size_t j = p.col_begin; j < p.col_end; ++j) {
                    const bool fresh = covered.insert({gr + i, gc + j}).second;
                    CHECK(fresh);
                    ++area;
                }
        }
        CHECK(area == (r1 - r0) * (c1 - c0));
        for (const auto& [gi, gj] : covered) {
            CHECK(gi >= r0);
            CHECK(gi < r1);
            CHECK(gj >= c0);
            CHECK(gj < c1);
        }
    }
}

TEST_CASE("disjoint windows sharing no tile have disjoint handles") {
    TiledMatrix m(32, 32, 4);
    auto a = m.window_handles(0, 4, 0, 4);
    auto b = m.window_handles(8, 12, 8, 12);
    for (const auto& ha : a)
        for (const auto& hb : b) CHECK(!(ha == hb));
}

TEST_CASE("gather/scatter round trip") {
    auto d = random_dense(20, 20, 77);
    TiledMatrix m = TiledMatrix::from_dense(d, 20, 20, 6);
    DenseMatrix block;
    m.gather(3, 17, 5, 19, block);
    CHECK(block(0, 0) == m.at(3, 5));
    m.scatter(3, 17, 5, 19, block);
    CHECK(m.to_dense() == d);
}

TEST_CASE("teig binary round trip") {
    DenseBuffer buf{3, 2, {1.5, -2.25, 3.0, 4.0, 5e-300, -6e300}};
    const std::string path = "test_roundtrip.teig";
    write_teig(path, buf);
    auto back = read_teig(path);
    CHECK(back.rows == 3);
    CHECK(back.cols == 2);
    CHECK(back.data == buf.data);
    std::remove(path.c_str());
}

TEST_CASE("matrix market round trip") {
    DenseBuffer buf{2, 3, {1.0, 0.125, -3.5, 4.0, 5.0, -0.0625}};
    const std::string path = "test_roundtrip.mtx";
    write_matrix_market(path, buf);
    auto back = read_matrix_market(path);
    CHECK(back.rows == 2);
    CHECK(back.cols == 3);
    CHECK(back.data == buf.data);
    std::remove(path.c_str());
}

TEST_CASE("default tile size policy") {
    CHECK(default_tile_size(2000) == 128);
    CHECK(default_tile_size(1000) == 128);
    CHECK(default_tile_size(100) == 32);
    CHECK(default_tile_size(500) == 64); // 500/8 = 62.5 -> 64
}
