// Copyright 2026 The ofo-sens Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#ifndef OFO_SENS_CSV_HPP_
#define OFO_SENS_CSV_HPP_

/**
 * @file
 * @brief Number formatting, RFC-4180 CSV reading and atomic file output.
 */

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ofo_sens/errors.hpp"

namespace ofo_sens {

/// Shortest-safe round-trip text for a double (17 significant digits).
inline std::string format_double(double v)
{
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Quotes a field if it holds a comma, quote or line break.
inline std::string csv_field(const std::string & s)
{
  if (s.find_first_of(",\"\r\n") == std::string::npos) { return s; }
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') { out += '"'; }
    out += ch;
  }
  out += '"';
  return out;
}

inline std::string csv_row(const std::vector<std::string> & fields)
{
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) { out += ','; }
    out += csv_field(fields[i]);
  }
  out += '\n';
  return out;
}

/// Parses CSV text into rows of fields.
inline std::vector<std::vector<std::string>> parse_csv(const std::string & text)
{
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
      continue;
    }
    if (ch == '"') {
      quoted = true;
      any = true;
    } else if (ch == ',') {
      row.push_back(field);
      field.clear();
      any = true;
    } else if (ch == '\n' || ch == '\r') {
      if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') { ++i; }
      row.push_back(field);
      rows.push_back(row);
      row.clear();
      field.clear();
      any = false;
    } else {
      field += ch;
      any = true;
    }
  }
  if (quoted) { throw ConfigError("unterminated quoted CSV field"); }
  if (any || !field.empty()) {
    row.push_back(field);
    rows.push_back(row);
  }
  return rows;
}

inline std::string read_file(const std::filesystem::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) { throw ConfigError("cannot open " + path.string()); }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a temporary sibling and renames it over the target.
inline void write_file_atomic(const std::filesystem::path & path, const std::string & content)
{
  if (path.has_parent_path()) { std::filesystem::create_directories(path.parent_path()); }
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) { throw Error("cannot write " + tmp.string()); }
    out << content;
    out.flush();
    if (!out) { throw Error("write failed for " + tmp.string()); }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace ofo_sens

#endif  // OFO_SENS_CSV_HPP_
