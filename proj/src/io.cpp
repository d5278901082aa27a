//
// taskeig -- task-based dense nonsymmetric eigensolver
//
// SPDX-License-Identifier: BSD-3-Clause
//
#include "taskeig/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace taskeig {

namespace {

static_assert(std::endian::native == std::endian::little,
              "byte-swapping writer not implemented for big-endian hosts");

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw std::runtime_error("teig: truncated file");
    return v;
}

} // namespace

void write_teig(const std::string& path, const DenseBuffer& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write("TEIG", 4);
    put<std::uint32_t>(os, 1);
    put<std::uint64_t>(os, m.rows);
    put<std::uint64_t>(os, m.cols);
    os.write(reinterpret_cast<const char*>(m.data.data()),
             static_cast<std::streamsize>(m.data.size() * sizeof(double)));
    if (!os) throw std::runtime_error("short write: " + path);
}

DenseBuffer read_teig(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "TEIG", 4) != 0)
        throw std::runtime_error("not a TEIG file: " + path);
    const auto version = get<std::uint32_t>(is);
    if (version != 1) throw std::runtime_error("unsupported TEIG version");
    DenseBuffer m;
    m.rows = get<std::uint64_t>(is);
    m.cols = get<std::uint64_t>(is);
    m.data.resize(m.rows * m.cols);
    is.read(reinterpret_cast<char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(double)));
    if (!is) throw std::runtime_error("teig: truncated data section");
    return m;
}

void write_matrix_market(const std::string& path, const DenseBuffer& m) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "%%MatrixMarket matrix array real general\n";
    os << m.rows << " " << m.cols << "\n";
    os.precision(17);
    for (std::size_t j = 0; j < m.cols; ++j)
        for (std::size_t i = 0; i < m.rows; ++i)
            os << m.data[i * m.cols + j] << "\n";
    if (!os) throw std::runtime_error("short write: " + path);
}

DenseBuffer read_matrix_market(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("empty file: " + path);
    if (line.rfind("%%MatrixMarket", 0) != 0)
        throw std::runtime_error("not a MatrixMarket file: " + path);
    {
        std::istringstream hs(line);
        std::string mm, obj, fmt, field, sym;
        hs >> mm >> obj >> fmt >> field >> sym;
        if (obj != "matrix" || fmt != "array" || field != "real" || sym != "general")
            throw std::runtime_error("unsupported MatrixMarket flavor: " + line);
    }
    while (std::getline(is, line)) {
        if (!line.empty() && line[0] != '%') break;
    }
    DenseBuffer m;
    {
        std::istringstream ds(line);
        if (!(ds >> m.rows >> m.cols)) throw std::runtime_error("bad size line: " + path);
    }
    m.data.resize(m.rows * m.cols);
    for (std::size_t j = 0; j < m.cols; ++j)
        for (std::size_t i = 0; i < m.rows; ++i)
            if (!(is >> m.data[i * m.cols + j]))
                throw std::runtime_error("truncated MatrixMarket body: " + path);
    return m;
}

void write_matrix_file(const std::string& path, const DenseBuffer& m,
                       const std::string& format) {
    if (format == "teig") write_teig(path, m);
    else if (format == "matrixmarket") write_matrix_market(path, m);
    else throw std::invalid_argument("unknown matrix format: " + format);
}

DenseBuffer read_matrix_file(const std::string& path, const std::string& format) {
    if (format == "teig") return read_teig(path);
    if (format == "matrixmarket") return read_matrix_market(path);
    throw std::invalid_argument("unknown matrix format: " + format);
}

} // namespace taskeig
