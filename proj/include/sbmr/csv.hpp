#pragma once

// CSV output helpers. All numbers go through format_double (17 significant
// digits, '.' decimal point regardless of locale) so that re-running a study
// with the same config reproduces every artifact byte for byte.

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "sbmr/errors.hpp"

namespace sbmr {

inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline std::string format_int(long long x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%lld", x);
    return buf;
}

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) {
        append_row(std::move(header));
    }

    void append_row(std::vector<std::string> cells) {
        std::string line;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) line += ',';
            line += cells[i];
        }
        line += '\n';
        body_ += line;
        ++rows_;
    }

    std::size_t data_rows() const { return rows_ > 0 ? rows_ - 1 : 0; }
    const std::string& text() const { return body_; }

    void write_file(const std::string& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        require(out.good(), ErrorCode::io, "cannot open for writing: " + path);
        out << body_;
        out.flush();
        require(out.good(), ErrorCode::io, "write failed: " + path);
    }

private:
    std::string body_;
    std::size_t rows_ = 0;
};

}  // namespace sbmr
