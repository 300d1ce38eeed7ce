#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace vdrisk::textio {

// Shortest round-trip decimal form (std::to_chars). Locale-independent and
// deterministic, which keeps every emitted artifact byte-stable.
std::string fmt(double v);

// Fixed-precision decimal form, used for plot coordinates.
std::string fmt_fixed(double v, int precision);

std::string fmt(long v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column index by name; -1 when absent.
  int column(std::string_view name) const;
};

// Strict comma-separated reader: UTF-8, one header row, uniform column count,
// no quoting (fields must not contain commas or newlines).
CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);

// Field parsers; `row` is the 1-based data row used in error messages.
double parse_double(const std::string& field, long row, const std::string& column);
long parse_long(const std::string& field, long row, const std::string& column);
bool parse_bool01(const std::string& field, long row, const std::string& column);

// Row-oriented CSV builder with the same dialect as read_csv.
class CsvBuilder {
 public:
  explicit CsvBuilder(std::vector<std::string> header);
  void add_row(std::vector<std::string> fields);
  const std::string& str() const { return out_; }

 private:
  std::size_t columns_;
  std::string out_;
};

void write_file(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

}  // namespace vdrisk::textio
