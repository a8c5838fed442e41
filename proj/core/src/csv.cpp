#include "ropdf/csv.hpp"

#include <charconv>
#include <cmath>

#include "ropdf/error.hpp"

namespace ropdf {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw Error("format_double: conversion failed");
    return std::string(buf, end);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header,
                     const std::string& manifest_hash)
    : out_(path, std::ios::trunc), path_(path), columns_(header.size()) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
    if (!manifest_hash.empty()) out_ << "# manifest " << manifest_hash << '\n';
    write_row(header);
}

void CsvWriter::write_row(std::span<const double> values) {
    if (values.size() != columns_) throw InvalidArgument("csv row has the wrong number of columns");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out_ << ',';
        out_ << format_double(values[i]);
    }
    out_ << '\n';
    if (!out_) throw IoError("failed writing " + path_.string());
}

void CsvWriter::write_row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw InvalidArgument("csv row has the wrong number of columns");
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out_ << ',';
        out_ << cells[i];
    }
    out_ << '\n';
    if (!out_) throw IoError("failed writing " + path_.string());
}

}  // namespace ropdf
