//
// taskeig -- task-based dense nonsymmetric eigensolver
//
// SPDX-License-Identifier: BSD-3-Clause
//
#ifndef TASKEIG_IO_HPP
#define TASKEIG_IO_HPP

#include <string>
#include <vector>

namespace taskeig {

struct DenseBuffer {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data; // row-major
};

// "TEIG" binary container: magic "TEIG", u32 version = 1, u64 rows,
// u64 cols, then rows*cols little-endian doubles in row-major order.
void write_teig(const std::string& path, const DenseBuffer& m);
DenseBuffer read_teig(const std::string& path);

// Matrix Market dense "array real general" text format (column-major body).
void write_matrix_market(const std::string& path, const DenseBuffer& m);
DenseBuffer read_matrix_market(const std::string& path);

/// Dispatch on format name: "teig" or "matrixmarket".
void write_matrix_file(const std::string& path, const DenseBuffer& m,
                       const std::string& format);
DenseBuffer read_matrix_file(const std::string& path, const std::string& format);

} // namespace taskeig

#endif
