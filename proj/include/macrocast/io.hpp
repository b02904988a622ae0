#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace macrocast::io {

struct CsvRow {
  std::size_t line = 0;  // 1-based line number in the source
  std::vector<std::string> fields;
};

// RFC-4180 style reader: quoted fields, doubled quotes, CRLF tolerated.
// Blank lines are skipped.
std::vector<CsvRow> read_csv(std::istream& in);
std::vector<CsvRow> read_csv_file(const std::filesystem::path& path);

std::string csv_escape(std::string_view field);

// Shortest round-trip decimal representation ("%.17g" trimmed to the
// shortest form that parses back to the same double).
std::string format_real(double v);
std::optional<double> parse_real(std::string_view s);

std::string read_file(const std::filesystem::path& path);
// Writes through a temporary sibling and renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string sha256_hex(std::string_view data);

}  // namespace macrocast::io
