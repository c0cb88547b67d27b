#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace curvebench {

// One CSV cell: text, 9-significant-digit float, or integer.
using CsvCell = std::variant<std::string, double, std::int64_t>;

std::string csv_format_cell(const CsvCell& cell);

// RFC-4180 quoting, UTF-8, '.' decimal separator, 9 significant digits.
class CsvWriter {
public:
  CsvWriter(std::string path, std::vector<std::string> header);
  void row(const std::vector<CsvCell>& cells);
  // Writes the accumulated table to disk; called by the destructor too.
  void flush();
  ~CsvWriter();

  const std::string& path() const { return path_; }
  const std::vector<std::string>& header() const { return header_; }

private:
  std::string path_;
  std::vector<std::string> header_;
  std::string body_;
  bool flushed_ = false;
};

}  // namespace curvebench
