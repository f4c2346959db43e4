#pragma once

// Small text-file helpers shared by the bundle, dataset and report writers.
// Kept out of the public headers on purpose.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "labelmia/common.hpp"

namespace lmia::textio {

inline std::string read_text_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("missing or unreadable file: " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Splits on '\n' and drops trailing empty lines, so a final newline does
/// not produce a phantom record.
inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

inline std::int64_t parse_int(std::string_view field, const std::string& where) {
  std::int64_t v = 0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size())
    throw FormatError(where + ": bad integer '" + std::string(field) + "'");
  return v;
}

inline double parse_number(std::string_view field, const std::string& where) {
  double v = 0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size())
    throw FormatError(where + ": bad number '" + std::string(field) + "'");
  return v;
}

inline std::vector<std::string_view> split_on(const std::string& line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  std::string_view sv(line);
  while (true) {
    std::size_t end = sv.find(sep, start);
    if (end == std::string_view::npos) {
      out.push_back(sv.substr(start));
      break;
    }
    out.push_back(sv.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

/// Writes through a sibling temp file and renames into place, so readers
/// never observe a half-written file.
inline void write_file_atomic(const std::filesystem::path& p, const std::string& content) {
  const std::filesystem::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write file: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw FormatError("short write: " + tmp.string());
  }
  std::filesystem::rename(tmp, p);
}

}  // namespace lmia::textio
