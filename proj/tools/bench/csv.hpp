#pragma once

#include <string>
#include <vector>

namespace seqpen::bench {

/// 6 significant digits, independent of the locale. NaN and infinities print
/// as nan, inf and -inf.
std::string format_number(double v);

/// In-memory CSV table, written with LF line endings and a header row.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }

  CsvTable& add_row(std::vector<std::string> cells);
  std::string str() const;
  void write(const std::string& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Parses CSV text produced by CsvTable (no quoting).
CsvTable parse_csv(const std::string& text, const std::string& origin);
CsvTable read_csv(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace seqpen::bench
