#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nexlim/errors.hpp"
#include "nexlim/matrix.hpp"

namespace nexlim {

// All result files print floats at 17 significant digits so re-emitting is
// byte-identical and values round-trip exactly.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

// Square matrix as CSV: header row "n,<count>", then one row per block row.
inline void write_matrix_csv(std::ostream& os, const Matrix& m) {
    os << "n," << m.rows << "\n";
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) {
            if (j) os << ',';
            os << format_double(m(i, j));
        }
        os << "\n";
    }
}

inline void save_matrix_csv(const std::string& path, const Matrix& m) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open for writing: " + path);
    write_matrix_csv(os, m);
    if (!os) throw io_error("write failed: " + path);
}

inline Matrix read_matrix_csv(std::istream& is, const std::string& what) {
    std::string line;
    if (!std::getline(is, line)) throw io_error(what + ": empty file");
    auto head = split_csv_line(line);
    if (head.size() < 2 || head[0] != "n") throw io_error(what + ": expected header 'n,<count>'");
    const long n = std::stol(head[1]);
    if (n < 1) throw io_error(what + ": block count must be >= 1");
    Matrix m(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        if (!std::getline(is, line)) throw io_error(what + ": missing row " + std::to_string(i + 1));
        auto cells = split_csv_line(line);
        if (cells.size() != static_cast<std::size_t>(n))
            throw io_error(what + ": row " + std::to_string(i + 1) + " has " +
                           std::to_string(cells.size()) + " values, expected " + std::to_string(n));
        for (long j = 0; j < n; ++j) m(i, j) = std::stod(cells[j]);
    }
    return m;
}

inline Matrix load_matrix_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open: " + path);
    return read_matrix_csv(is, path);
}

}  // namespace nexlim
