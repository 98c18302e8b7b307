#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace qsa::csv {

/// Shortest text with 17 significant digits; parses back to the same double.
std::string format_double(double x);

void write_header(std::ostream& os, std::span<const std::string> columns);
void write_row(std::ostream& os, std::span<const double> values);

struct NumericTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    /// Index of a named column; throws qsa::IoError when absent.
    [[nodiscard]] std::size_t column(const std::string& name) const;
};

/// Reads a CSV whose first line is a header and whose other cells are numbers.
NumericTable read_numeric(std::istream& is);

/// Splits one CSV line on commas (no quoting).
std::vector<std::string> split_line(const std::string& line);

}  // namespace qsa::csv
