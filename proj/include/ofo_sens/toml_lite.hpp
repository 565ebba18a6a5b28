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


#ifndef OFO_SENS_TOML_LITE_HPP_
#define OFO_SENS_TOML_LITE_HPP_

/**
 * @file
 * @brief Reader and writer for the TOML subset used by experiment configs.
 *
 * Supported: `[section]` headers, `key = value` pairs, `#` comments, basic strings,
 * booleans, integers, floats (including inf and nan) and arrays, which may nest and
 * span several lines. Inline tables, dates and multi-line strings are rejected.
 */

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "ofo_sens/csv.hpp"
#include "ofo_sens/errors.hpp"

namespace ofo_sens::toml {

struct Value;
using Array = std::vector<Value>;

struct Value
{
  std::variant<bool, long long, double, std::string, Array> data;

  bool is_number() const { return std::holds_alternative<long long>(data) || std::holds_alternative<double>(data); }
  bool is_string() const { return std::holds_alternative<std::string>(data); }
  bool is_array() const { return std::holds_alternative<Array>(data); }
  bool is_bool() const { return std::holds_alternative<bool>(data); }

  bool operator==(const Value &) const = default;
};

/// Keys keep file order inside each section.
struct Section
{
  std::vector<std::pair<std::string, Value>> entries;

  const Value * find(const std::string & key) const
  {
    for (const auto & [k, v] : entries) {
      if (k == key) { return &v; }
    }
    return nullptr;
  }

  void set(const std::string & key, Value v)
  {
    for (auto & [k, old] : entries) {
      if (k == key) {
        old = std::move(v);
        return;
      }
    }
    entries.emplace_back(key, std::move(v));
  }

  bool operator==(const Section &) const = default;
};

struct Document
{
  std::vector<std::pair<std::string, Section>> sections;

  const Section * find(const std::string & name) const
  {
    for (const auto & [n, s] : sections) {
      if (n == name) { return &s; }
    }
    return nullptr;
  }

  Section & get_or_add(const std::string & name)
  {
    for (auto & [n, s] : sections) {
      if (n == name) { return s; }
    }
    sections.emplace_back(name, Section{});
    return sections.back().second;
  }

  bool operator==(const Document &) const = default;
};

namespace detail {

class Parser
{
public:
  explicit Parser(const std::string & text) : s_(text) {}

  Document parse()
  {
    Document doc;
    Section * cur = &doc.get_or_add("");
    while (true) {
      skip_ws_and_comments(true);
      if (eof()) { break; }
      if (peek() == '[') {
        ++pos_;
        skip_inline_ws();
        const std::string name = bare_key();
        skip_inline_ws();
        expect(']');
        for (const auto & [n, _] : doc.sections) {
          if (n == name) { fail("duplicate section [" + name + "]"); }
        }
        cur = &doc.get_or_add(name);
      } else {
        const std::string key = peek() == '"' ? string() : bare_key();
        skip_inline_ws();
        expect('=');
        skip_inline_ws();
        Value v = value();
        if (cur->find(key) != nullptr) { fail("duplicate key '" + key + "'"); }
        cur->entries.emplace_back(key, std::move(v));
      }
      end_of_line();
    }
    return doc;
  }

private:
  const std::string & s_;
  std::size_t pos_ = 0;
  int line_ = 1;

  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return eof() ? '\0' : s_[pos_]; }

  [[noreturn]] void fail(const std::string & msg) const
  {
    throw ConfigError("config line " + std::to_string(line_) + ": " + msg);
  }

  void expect(char c)
  {
    if (peek() != c) { fail(std::string("expected '") + c + "'"); }
    ++pos_;
  }

  void skip_inline_ws()
  {
    while (!eof() && (peek() == ' ' || peek() == '\t')) { ++pos_; }
  }

  void skip_ws_and_comments(bool newlines)
  {
    while (!eof()) {
      const char c = peek();
      if (c == ' ' || c == '\t' || c == '\r') {
        ++pos_;
      } else if (c == '\n' && newlines) {
        ++pos_;
        ++line_;
      } else if (c == '#') {
        while (!eof() && peek() != '\n') { ++pos_; }
      } else {
        break;
      }
    }
  }

  void end_of_line()
  {
    skip_inline_ws();
    if (peek() == '#') {
      while (!eof() && peek() != '\n') { ++pos_; }
    }
    if (peek() == '\r') { ++pos_; }
    if (eof()) { return; }
    if (peek() != '\n') { fail("unexpected text after value"); }
  }

  std::string bare_key()
  {
    const std::size_t start = pos_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-' || peek() == '.')) {
      ++pos_;
    }
    if (pos_ == start) { fail("expected a key"); }
    return s_.substr(start, pos_ - start);
  }

  std::string string()
  {
    expect('"');
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') { fail("unterminated string"); }
      const char c = s_[pos_++];
      if (c == '"') { break; }
      if (c != '\\') {
        out += c;
        continue;
      }
      if (eof()) { fail("bad escape"); }
      const char e = s_[pos_++];
      switch (e) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        default: fail(std::string("unsupported escape \\") + e);
      }
    }
    return out;
  }

  Value value()
  {
    const char c = peek();
    if (c == '"') { return {string()}; }
    if (c == '[') { return {array()}; }
    if (s_.compare(pos_, 4, "true") == 0) {
      pos_ += 4;
      return {true};
    }
    if (s_.compare(pos_, 5, "false") == 0) {
      pos_ += 5;
      return {false};
    }
    return number();
  }

  Array array()
  {
    expect('[');
    Array out;
    while (true) {
      skip_ws_and_comments(true);
      if (peek() == ']') {
        ++pos_;
        return out;
      }
      out.push_back(value());
      skip_ws_and_comments(true);
      if (peek() == ',') {
        ++pos_;
      } else if (peek() != ']') {
        fail("expected ',' or ']' in array");
      }
    }
  }

  Value number()
  {
    const std::size_t start = pos_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '+' || peek() == '-' || peek() == '.' || peek() == '_')) {
      ++pos_;
    }
    std::string tok = s_.substr(start, pos_ - start);
    if (tok.empty()) { fail("expected a value"); }
    std::string clean;
    for (char ch : tok) {
      if (ch != '_') { clean += ch; }
    }
    const bool sign = clean[0] == '+' || clean[0] == '-';
    const std::string body = sign ? clean.substr(1) : clean;
    if (body == "inf" || body == "nan") {
      double v = body == "inf" ? HUGE_VAL : std::nan("");
      return {clean[0] == '-' ? -v : v};
    }
    const bool is_float = clean.find_first_of(".eE") != std::string::npos;
    const char * first = clean.data() + (clean[0] == '+' ? 1 : 0);
    const char * last = clean.data() + clean.size();
    if (is_float) {
      char * end = nullptr;
      const double v = std::strtod(first, &end);
      if (end != last) { fail("malformed number '" + tok + "'"); }
      return {v};
    }
    long long iv = 0;
    auto [ptr, ec] = std::from_chars(first, last, iv);
    if (ec != std::errc() || ptr != last) { fail("malformed number '" + tok + "'"); }
    return {iv};
  }
};

inline std::string quote(const std::string & s)
{
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out + "\"";
}

inline std::string format_number(double v)
{
  if (std::isnan(v)) { return "nan"; }
  if (std::isinf(v)) { return v > 0 ? "inf" : "-inf"; }
  std::string s = format_double(v);
  if (s.find_first_of(".eEn") == std::string::npos) { s += ".0"; }
  return s;
}

inline void write_value(std::string & out, const Value & v, int depth)
{
  if (const auto * b = std::get_if<bool>(&v.data)) {
    out += *b ? "true" : "false";
  } else if (const auto * i = std::get_if<long long>(&v.data)) {
    out += std::to_string(*i);
  } else if (const auto * d = std::get_if<double>(&v.data)) {
    out += format_number(*d);
  } else if (const auto * s = std::get_if<std::string>(&v.data)) {
    out += quote(*s);
  } else {
    const auto & a = std::get<Array>(v.data);
    const bool nested = !a.empty() && a.front().is_array();
    out += '[';
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (nested) {
        out += "\n";
        out += std::string(static_cast<std::size_t>(2 * (depth + 1)), ' ');
      } else if (k > 0) {
        out += ' ';
      }
      write_value(out, a[k], depth + 1);
      if (k + 1 < a.size() || nested) { out += ','; }
    }
    if (nested) { out += "\n" + std::string(static_cast<std::size_t>(2 * depth), ' '); }
    out += ']';
  }
}

}  // namespace detail

inline Document parse(const std::string & text)
{
  return detail::Parser(text).parse();
}

inline std::string serialize(const Document & doc)
{
  std::string out;
  bool first = true;
  for (const auto & [name, sec] : doc.sections) {
    if (name.empty() && sec.entries.empty()) { continue; }
    if (!first) { out += '\n'; }
    first = false;
    if (!name.empty()) { out += "[" + name + "]\n"; }
    for (const auto & [k, v] : sec.entries) {
      out += k + " = ";
      detail::write_value(out, v, 0);
      out += '\n';
    }
  }
  return out;
}

}  // namespace ofo_sens::toml

#endif  // OFO_SENS_TOML_LITE_HPP_
