#pragma once

#include "errors.hpp"

#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace bhs {

// Shortest text that is still 17 significant digits, so values round-trip exactly.
inline std::string format_double(double x) {
    char buf[40];
    const auto r = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
    return std::string(buf, r.ptr);
}

// Column-major table with a header row.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> columns;

    [[nodiscard]] std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }

    [[nodiscard]] std::size_t column_index(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw ConfigError("csv: missing column '" + std::string(name) + "'");
    }
    [[nodiscard]] const std::vector<double>& column(std::string_view name) const {
        return columns[column_index(name)];
    }

    void add(std::string name, std::vector<double> values) {
        if (!columns.empty() && values.size() != rows())
            throw ParameterError("csv: column '" + name + "' has " + std::to_string(values.size()) +
                                 " rows, expected " + std::to_string(rows()));
        header.push_back(std::move(name));
        columns.push_back(std::move(values));
    }
};

inline void write_csv(const std::filesystem::path& path, const CsvTable& table) {
    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("csv: cannot write " + path.string());
    for (std::size_t c = 0; c < table.header.size(); ++c) out << (c ? "," : "") << table.header[c];
    out << '\n';
    for (std::size_t r = 0; r < table.rows(); ++r) {
        for (std::size_t c = 0; c < table.columns.size(); ++c)
            out << (c ? "," : "") << format_double(table.columns[c][r]);
        out << '\n';
    }
    if (!out) throw ConfigError("csv: write failed for " + path.string());
}

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("csv: cannot open " + path.string());
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("csv: " + path.string() + " is empty");
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) t.header.push_back(cell);
    }
    t.columns.resize(t.header.size());
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::size_t c = 0, start = 0;
        while (true) {
            const auto end = line.find(',', start);
            const std::string_view cell(line.data() + start, (end == std::string::npos ? line.size() : end) - start);
            if (c >= t.header.size())
                throw ConfigError("csv: " + path.string() + ":" + std::to_string(line_no) + " has extra fields");
            double v = 0.0;
            const auto r = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (r.ec != std::errc() || r.ptr != cell.data() + cell.size())
                throw ConfigError("csv: " + path.string() + ":" + std::to_string(line_no) + " column '" +
                                  t.header[c] + "' is not a number: '" + std::string(cell) + "'");
            t.columns[c++].push_back(v);
            if (end == std::string::npos) break;
            start = end + 1;
        }
        if (c != t.header.size())
            throw ConfigError("csv: " + path.string() + ":" + std::to_string(line_no) + " has " + std::to_string(c) +
                              " fields, header has " + std::to_string(t.header.size()));
    }
    return t;
}

} // namespace bhs
