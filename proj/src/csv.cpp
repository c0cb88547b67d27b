#include "curvebench/csv.hpp"

#include <cstdio>

#include "curvebench/io_util.hpp"

namespace curvebench {

namespace {

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

}  // namespace

std::string csv_format_cell(const CsvCell& cell) {
  if (const auto* s = std::get_if<std::string>(&cell)) return quote_if_needed(*s);
  if (const auto* d = std::get_if<double>(&cell)) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", *d);
    return buf;
  }
  return std::to_string(std::get<std::int64_t>(cell));
}

CsvWriter::CsvWriter(std::string path, std::vector<std::string> header)
    : path_(std::move(path)), header_(std::move(header)) {
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (i) body_ += ",";
    body_ += quote_if_needed(header_[i]);
  }
  body_ += "\n";
}

void CsvWriter::row(const std::vector<CsvCell>& cells) {
  if (cells.size() != header_.size()) {
    throw ConfigError("csv: row with " + std::to_string(cells.size()) + " cells against " +
                      std::to_string(header_.size()) + " columns in " + path_);
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) body_ += ",";
    body_ += csv_format_cell(cells[i]);
  }
  body_ += "\n";
}

void CsvWriter::flush() {
  if (flushed_) return;
  write_file(path_, body_);
  flushed_ = true;
}

CsvWriter::~CsvWriter() {
  try {
    flush();
  } catch (...) {
    // destructor must not throw; an explicit flush() reports failures
  }
}

}  // namespace curvebench
