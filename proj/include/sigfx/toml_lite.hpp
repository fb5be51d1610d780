#ifndef SIGFX_TOML_LITE_HPP
#define SIGFX_TOML_LITE_HPP

// Reader for the subset of TOML used by experiment configs: tables, dotted
// keys, basic and literal strings, integers, floats, booleans, arrays (which
// may span lines) and inline tables. Dates and arrays of tables are rejected.
// The document is returned as a JSON object.

#include "sigfx/common.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace sigfx::toml {

class ParseError : public Error {
public:
  using Error::Error;
};

namespace detail {

class Parser {
public:
  explicit Parser(std::string_view text) : s_(text) {}

  nlohmann::json parse()
  {
    nlohmann::json root = nlohmann::json::object();
    nlohmann::json* table = &root;
    while (true) {
      skip_ws_comments_newlines();
      if (eof())
        break;
      if (peek() == '[') {
        ++pos_;
        if (peek() == '[')
          fail("arrays of tables are not supported");
        skip_ws();
        auto path = parse_key_path();
        skip_ws();
        expect(']');
        table = &descend(root, path, true);
        end_of_line();
        continue;
      }
      auto path = parse_key_path();
      skip_ws();
      expect('=');
      skip_ws();
      auto value = parse_value();
      assign(*table, path, std::move(value));
      end_of_line();
    }
    return root;
  }

private:
  [[noreturn]] void fail(std::string_view what) const
  {
    throw ParseError(fmt::format("TOML parse error at line {}: {}", line(), what));
  }

  std::size_t line() const
  {
    std::size_t l = 1;
    for (std::size_t i = 0; i < pos_ && i < s_.size(); ++i)
      l += s_[i] == '\n';
    return l;
  }

  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return eof() ? '\0' : s_[pos_]; }

  void expect(char c)
  {
    if (peek() != c)
      fail(fmt::format("expected '{}'", c));
    ++pos_;
  }

  void skip_ws()
  {
    while (!eof() && (peek() == ' ' || peek() == '\t'))
      ++pos_;
  }

  void skip_comment()
  {
    if (peek() == '#')
      while (!eof() && peek() != '\n')
        ++pos_;
  }

  void skip_ws_comments_newlines()
  {
    while (!eof()) {
      const char c = peek();
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n')
        ++pos_;
      else if (c == '#')
        skip_comment();
      else
        break;
    }
  }

  void end_of_line()
  {
    skip_ws();
    skip_comment();
    if (peek() == '\r')
      ++pos_;
    if (!eof() && peek() != '\n')
      fail("unexpected trailing characters");
  }

  std::vector<std::string> parse_key_path()
  {
    std::vector<std::string> path;
    while (true) {
      skip_ws();
      if (peek() == '"')
        path.push_back(parse_basic_string());
      else if (peek() == '\'')
        path.push_back(parse_literal_string());
      else {
        const auto start = pos_;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-'))
          ++pos_;
        if (pos_ == start)
          fail("expected a key");
        path.emplace_back(s_.substr(start, pos_ - start));
      }
      skip_ws();
      if (peek() != '.')
        break;
      ++pos_;
    }
    return path;
  }

  nlohmann::json& descend(nlohmann::json& root, const std::vector<std::string>& path, bool header)
  {
    nlohmann::json* node = &root;
    for (std::size_t i = 0; i < path.size(); ++i) {
      auto& child = (*node)[path[i]];
      if (child.is_null())
        child = nlohmann::json::object();
      else if (!child.is_object())
        fail(fmt::format("key '{}' is not a table", path[i]));
      else if (header && i + 1 == path.size() && defined_tables_.count(joined(path, i + 1)))
        fail(fmt::format("table '{}' defined twice", joined(path, i + 1)));
      node = &child;
    }
    if (header)
      defined_tables_.insert(joined(path, path.size()));
    return *node;
  }

  static std::string joined(const std::vector<std::string>& path, std::size_t count)
  {
    std::string out;
    for (std::size_t i = 0; i < count; ++i) {
      if (i)
        out += '.';
      out += path[i];
    }
    return out;
  }

  void assign(nlohmann::json& table, const std::vector<std::string>& path, nlohmann::json value)
  {
    nlohmann::json* node = &table;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      auto& child = (*node)[path[i]];
      if (child.is_null())
        child = nlohmann::json::object();
      else if (!child.is_object())
        fail(fmt::format("key '{}' is not a table", path[i]));
      node = &child;
    }
    if (node->contains(path.back()))
      fail(fmt::format("duplicate key '{}'", path.back()));
    (*node)[path.back()] = std::move(value);
  }

  nlohmann::json parse_value()
  {
    const char c = peek();
    if (c == '"')
      return parse_basic_string();
    if (c == '\'')
      return parse_literal_string();
    if (c == '[')
      return parse_array();
    if (c == '{')
      return parse_inline_table();
    if (s_.substr(pos_).starts_with("true")) {
      pos_ += 4;
      return true;
    }
    if (s_.substr(pos_).starts_with("false")) {
      pos_ += 5;
      return false;
    }
    return parse_number();
  }

  nlohmann::json parse_array()
  {
    expect('[');
    nlohmann::json arr = nlohmann::json::array();
    while (true) {
      skip_ws_comments_newlines();
      if (peek() == ']') {
        ++pos_;
        return arr;
      }
      arr.push_back(parse_value());
      skip_ws_comments_newlines();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      skip_ws_comments_newlines();
      expect(']');
      return arr;
    }
  }

  nlohmann::json parse_inline_table()
  {
    expect('{');
    nlohmann::json obj = nlohmann::json::object();
    skip_ws();
    if (peek() == '}') {
      ++pos_;
      return obj;
    }
    while (true) {
      auto path = parse_key_path();
      skip_ws();
      expect('=');
      skip_ws();
      assign(obj, path, parse_value());
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      expect('}');
      return obj;
    }
  }

  std::string parse_literal_string()
  {
    expect('\'');
    const auto start = pos_;
    while (!eof() && peek() != '\'' && peek() != '\n')
      ++pos_;
    if (peek() != '\'')
      fail("unterminated literal string");
    std::string out(s_.substr(start, pos_ - start));
    ++pos_;
    return out;
  }

  std::string parse_basic_string()
  {
    expect('"');
    std::string out;
    while (true) {
      if (eof() || peek() == '\n')
        fail("unterminated string");
      const char c = s_[pos_++];
      if (c == '"')
        return out;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (eof())
        fail("unterminated escape");
      const char e = s_[pos_++];
      switch (e) {
      case '"': out += '"'; break;
      case '\\': out += '\\'; break;
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case 'r': out += '\r'; break;
      case 'b': out += '\b'; break;
      case 'f': out += '\f'; break;
      default: fail(fmt::format("unsupported escape '\\{}'", e));
      }
    }
  }

  nlohmann::json parse_number()
  {
    const auto start = pos_;
    while (!eof()) {
      const char c = peek();
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '-' || c == '.' || c == '_')
        ++pos_;
      else
        break;
    }
    std::string token;
    for (char c : s_.substr(start, pos_ - start))
      if (c != '_')
        token += c;
    if (token.empty())
      fail("expected a value");
    std::string_view body = token;
    bool negative = false;
    if (body.front() == '+' || body.front() == '-') {
      negative = body.front() == '-';
      body.remove_prefix(1);
    }
    if (body == "inf")
      return negative ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
    if (body == "nan")
      return std::numeric_limits<double>::quiet_NaN();
    const bool is_float = token.find_first_of(".eE") != std::string::npos;
    if (!is_float) {
      std::int64_t v = 0;
      auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), v);
      if (ec != std::errc{} || ptr != body.data() + body.size())
        fail(fmt::format("invalid value '{}'", token));
      return negative ? -v : v;
    }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), v);
    if (ec != std::errc{} || ptr != body.data() + body.size())
      fail(fmt::format("invalid value '{}'", token));
    return negative ? -v : v;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  std::set<std::string> defined_tables_;
};

} // namespace detail

inline nlohmann::json parse(std::string_view text) { return detail::Parser(text).parse(); }

inline nlohmann::json parse_file(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw Error(fmt::format("cannot open config file '{}'", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

} // namespace sigfx::toml

#endif // SIGFX_TOML_LITE_HPP
