#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace vlce::io {

std::string read_file(const std::filesystem::path& path);

// Creates parent directories. Throws kIo on failure.
void write_file(const std::filesystem::path& path, std::string_view contents);

// Lines without their terminators; a trailing "\r" is dropped as well.
std::vector<std::string> split_lines(std::string_view text);

struct CsvRow {
  std::size_t line = 0;  // 1-based line where the row starts
  std::vector<std::string> fields;
};

// RFC 4180 style: comma separated, double-quote quoting with "" escapes,
// quoted fields may span lines. Throws kParse with the line number on an
// unterminated quote or a stray quote inside an unquoted field.
std::vector<CsvRow> parse_csv(std::string_view text);

std::string csv_escape(std::string_view field);

// Joins already-escaped-as-needed fields into one CSV line with "\n".
std::string csv_line(const std::vector<std::string>& fields);

// Shortest round-trip decimal representation.
std::string format_double(double value);

std::string to_hex(std::uint64_t value);

std::string trim(std::string_view s);

}  // namespace vlce::io
