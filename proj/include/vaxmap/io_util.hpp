#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace vaxmap {

// Minimal CSV table: header plus string cells. Quoted fields (RFC 4180) are
// accepted on read; fields are quoted on write only when needed.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column index by name, or -1.
  int column(std::string_view name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);
std::string csv_escape(std::string_view field);

// Shortest representation that parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view text, const std::string& context);
long long parse_int(std::string_view text, const std::string& context);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);
// Version string of the linked hashing library.
std::string crypto_library_version();

}  // namespace vaxmap
