#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "kdvred/error.hpp"

namespace kdvred::harness {

/// Scientific notation with 17 significant digits; locale independent.
inline std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::scientific, 16);
    if (res.ec != std::errc{}) throw NumericalError("format_double: conversion failed");
    return std::string(buf, res.ptr);
}

/// Quotes a field when it contains a delimiter, quote or line break.
inline std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

/// One CSV cell: number or text.
class Cell {
public:
    Cell(double v) : text_(format_double(v)) {}
    Cell(int v) : text_(std::to_string(v)) {}
    Cell(long v) : text_(std::to_string(v)) {}
    Cell(unsigned long v) : text_(std::to_string(v)) {}
    Cell(unsigned v) : text_(std::to_string(v)) {}
    Cell(const char* s) : text_(csv_escape(s)) {}
    Cell(const std::string& s) : text_(csv_escape(s)) {}
    Cell(std::string_view s) : text_(csv_escape(s)) {}

    const std::string& text() const { return text_; }

private:
    std::string text_;
};

/// CSV file with a "# key = value" header block, one header row of column
/// names and '\n' line endings.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header_block,
              const std::vector<std::string>& columns)
        : out_(path, std::ios::binary | std::ios::trunc), path_(path), n_columns_(columns.size()) {
        if (!out_) throw ConfigError("cannot open output file " + path);
        for (const auto& line : header_block) out_ << "# " << line << '\n';
        std::vector<Cell> cells(columns.begin(), columns.end());
        write_cells(cells);
    }

    void row(const std::vector<Cell>& cells) {
        if (cells.size() != n_columns_) {
            throw std::logic_error("CsvWriter: row has " + std::to_string(cells.size()) + " cells, expected " +
                                 std::to_string(n_columns_) + " (" + path_ + ")");
        }
        write_cells(cells);
    }

    void close() {
        out_.flush();
        if (!out_) throw NumericalError("write failed: " + path_);
        out_.close();
    }

private:
    void write_cells(const std::vector<Cell>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i].text();
        }
        out_ << '\n';
    }

    std::ofstream out_;
    std::string path_;
    std::size_t n_columns_;
};

} // namespace kdvred::harness
