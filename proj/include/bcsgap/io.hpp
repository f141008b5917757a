#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <stdexcept>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bcsgap/errors.hpp"

namespace bcsgap {

/// Writes a result file that cannot be created.
class OutputError : public Error {
 public:
  using Error::Error;
};

/// %.17g: every double round-trips exactly. Non-finite values become null in
/// JSON and "nan"/"inf" in CSV.
inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace detail {

inline void dump_json(const nlohmann::json& j, std::string& out, int indent, int depth) {
  using nlohmann::json;
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close(static_cast<std::size_t>(indent * depth), ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (const auto& [key, val] : j.items()) {  // keys are sorted by nlohmann::json
        if (!first) out += ",\n";
        first = false;
        out += pad + json(key).dump() + ": ";
        dump_json(val, out, indent, depth + 1);
      }
      out += "\n" + close + "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      // numeric arrays stay on one line
      const bool flat = std::all_of(j.begin(), j.end(), [](const json& e) { return e.is_primitive(); });
      out += flat ? "[" : "[\n";
      bool first = true;
      for (const auto& e : j) {
        if (!first) out += flat ? ", " : ",\n";
        first = false;
        if (!flat) out += pad;
        dump_json(e, out, indent, depth + 1);
      }
      out += flat ? "]" : "\n" + close + "]";
      return;
    }
    case json::value_t::number_float: {
      const double x = j.get<double>();
      out += std::isfinite(x) ? format_number(x) : "null";
      return;
    }
    default:
      out += j.dump();
  }
}

}  // namespace detail

/// Pretty JSON with doubles at 17 significant digits.
inline std::string dump_json(const nlohmann::json& j) {
  std::string out;
  detail::dump_json(j, out, 2, 0);
  out += "\n";
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw OutputError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw OutputError("failed writing '" + path.string() + "'");
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text(path, dump_json(j));
}

/// Column-oriented CSV builder; cells are numbers or short tokens.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  CsvTable& row(const std::vector<std::string>& cells) {
    if (cells.size() != header_.size())
      throw std::invalid_argument("CsvTable: row width does not match the header");
    rows_.push_back(cells);
    return *this;
  }

  std::string str() const {
    std::string s;
    auto line = [&s](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) s += ',';
        s += cells[i];
      }
      s += '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return s;
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// UTC, second resolution, e.g. 2024-01-31T12:00:00Z.
inline std::string iso8601_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace bcsgap
