#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace bt {

inline constexpr const char* kVersion = "0.1.0";

// Numbers are written with 17 significant digits.
std::string format_number(double v);

struct Cell {
  std::string text;
  Cell(double v) : text(format_number(v)) {}
  Cell(int v) : text(std::to_string(v)) {}
  Cell(long v) : text(std::to_string(v)) {}
  Cell(std::size_t v) : text(std::to_string(v)) {}
  Cell(const char* s) : text(s) {}
  Cell(std::string s) : text(std::move(s)) {}
  Cell(bool b) : text(b ? "true" : "false") {}
};

struct OutputTable {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  OutputTable(std::string table_name, std::vector<std::string> cols);
  void add_row(const std::vector<Cell>& cells);
  // Header lines "# key: value" followed by the CSV body.
  std::string to_csv(const std::string& config_hash) const;
  std::string body_csv() const;
};

std::uint64_t fnv1a(const std::string& s);
std::string hex64(std::uint64_t v);

}  // namespace bt
