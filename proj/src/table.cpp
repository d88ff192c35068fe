#include "bubbletower/table.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace bt {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

OutputTable::OutputTable(std::string table_name, std::vector<std::string> cols)
    : name(std::move(table_name)), columns(std::move(cols)) {}

void OutputTable::add_row(const std::vector<Cell>& cells) {
  if (cells.size() != columns.size())
    throw std::invalid_argument("OutputTable " + name + ": row has " + std::to_string(cells.size()) +
                                " cells, expected " + std::to_string(columns.size()));
  std::vector<std::string> row;
  for (const auto& c : cells) row.push_back(c.text);
  rows.push_back(std::move(row));
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_row(std::ostringstream& os, const std::vector<std::string>& row) {
  for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << csv_field(row[i]);
  os << "\n";
}

}  // namespace

std::string OutputTable::body_csv() const {
  std::ostringstream os;
  write_row(os, columns);
  for (const auto& r : rows) write_row(os, r);
  return os.str();
}

std::string OutputTable::to_csv(const std::string& config_hash) const {
  std::ostringstream os;
  os << "# bubbletower: " << kVersion << "\n# config_hash: " << config_hash << "\n# table: " << name << "\n";
  return os.str() + body_csv();
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace bt
