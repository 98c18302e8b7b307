#include "qsa/csv.hpp"

#include <charconv>
#include <istream>
#include <ostream>

#include "qsa/errors.hpp"

namespace qsa::csv {

std::string format_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general, 17);
    return {buf, res.ptr};
}

void write_header(std::ostream& os, std::span<const std::string> columns) {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (i > 0) {
            os << ',';
        }
        os << columns[i];
    }
    os << '\n';
}

void write_row(std::ostream& os, std::span<const double> values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i > 0) {
            os << ',';
        }
        os << format_double(values[i]);
    }
    os << '\n';
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    cells.push_back(cur);
    return cells;
}

std::size_t NumericTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) {
            return i;
        }
    }
    throw IoError("CSV column '" + name + "' not found");
}

NumericTable read_numeric(std::istream& is) {
    NumericTable table;
    std::string line;
    if (!std::getline(is, line)) {
        throw IoError("empty CSV input");
    }
    table.header = split_line(line);
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        const auto cells = split_line(line);
        if (cells.size() != table.header.size()) {
            throw IoError("CSV line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                          " cells, expected " + std::to_string(table.header.size()));
        }
        std::vector<double> row(cells.size());
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const auto& s = cells[i];
            const auto res = std::from_chars(s.data(), s.data() + s.size(), row[i]);
            if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
                throw IoError("CSV line " + std::to_string(lineno) + ": not a number: '" + s + "'");
            }
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

}  // namespace qsa::csv
