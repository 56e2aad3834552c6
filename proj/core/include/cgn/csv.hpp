#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace cgn {

/// Minimal CSV table: one header row plus string cells. Values written by
/// the toolkit never contain commas or quotes, so no escaping is done.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
  const std::string& cell(size_t row, const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

std::string format_double(double v);

}  // namespace cgn
