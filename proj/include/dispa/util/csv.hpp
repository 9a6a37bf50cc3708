#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace dispa::csv {

struct Row {
  std::size_t line = 0;  // 1-based line number in the source file
  std::vector<std::string> fields;
};

struct Table {
  std::string source;
  std::vector<std::string> header;
  std::vector<Row> rows;

  // Index of a header column, or throws DataError naming the file.
  std::size_t column(std::string_view name) const;
};

// Splits one line on `delim`, honouring double-quoted fields.
std::vector<std::string> split_line(std::string_view line, char delim = ',');

// Reads a delimited file with a header row. Blank lines are skipped; a UTF-8
// BOM and trailing CR are stripped.
Table read(const std::filesystem::path& path, char delim = ',');
Table parse(std::istream& in, std::string source, char delim = ',');

// Parses a finite double; throws DataError with the location on failure.
double parse_double(std::string_view text, const std::string& where);
long long parse_int(std::string_view text, const std::string& where);

// Quotes a field if it contains the delimiter, a quote, or a newline.
std::string escape(std::string_view field, char delim = ',');

// Shortest decimal representation that round-trips to the same double.
std::string format_double(double v);

void write_row(std::ostream& out, const std::vector<std::string>& fields, char delim = ',');

}  // namespace dispa::csv
