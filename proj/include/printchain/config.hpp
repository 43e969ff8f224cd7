#pragma once

// Minimal TOML-style configuration: `[section]` headers, `key = value` pairs,
// `#` comments. Values are numbers, booleans or double-quoted strings.

#include <printchain/error.hpp>

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace printchain {

/// A configuration value is missing, has the wrong type or is out of range.
/// Messages name the offending `section.key`.
class ConfigError : public InvalidArgument {
public:
  using InvalidArgument::InvalidArgument;
};

class Config {
public:
  using Value = std::variant<double, bool, std::string>;

  static Config parse(std::string_view text) {
    Config cfg;
    std::string section;
    std::size_t line_no = 0, pos = 0;
    while (pos <= text.size()) {
      auto nl = text.find('\n', pos);
      if (nl == std::string_view::npos)
        nl = text.size();
      std::string line(text.substr(pos, nl - pos));
      pos = nl + 1;
      ++line_no;
      line = strip(strip_comment(line));
      if (line.empty()) {
        if (nl == text.size())
          break;
        continue;
      }
      if (line.front() == '[') {
        if (line.back() != ']')
          throw ParseError("config line " + std::to_string(line_no) + ": unterminated section header");
        section = strip(line.substr(1, line.size() - 2));
        if (section.empty() || !is_identifier(section))
          throw ParseError("config line " + std::to_string(line_no) + ": bad section name");
        if (cfg.sections_.count(section))
          throw ParseError("config line " + std::to_string(line_no) + ": duplicate section [" + section + "]");
        cfg.sections_[section];
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ParseError("config line " + std::to_string(line_no) + ": expected key = value");
      const std::string key = strip(line.substr(0, eq));
      const std::string raw = strip(line.substr(eq + 1));
      if (section.empty())
        throw ParseError("config line " + std::to_string(line_no) + ": key '" + key + "' outside any section");
      if (!is_identifier(key))
        throw ParseError("config line " + std::to_string(line_no) + ": bad key name '" + key + "'");
      auto &sec = cfg.sections_[section];
      if (sec.count(key))
        throw ParseError("config line " + std::to_string(line_no) + ": duplicate key " + section + "." + key);
      sec[key] = parse_value(raw, line_no);
      if (nl == text.size())
        break;
    }
    return cfg;
  }

  bool has(const std::string &section) const { return sections_.count(section) > 0; }
  bool has(const std::string &section, const std::string &key) const {
    auto it = sections_.find(section);
    return it != sections_.end() && it->second.count(key) > 0;
  }

  double number(const std::string &section, const std::string &key) const {
    const auto &v = get(section, key);
    if (!std::holds_alternative<double>(v))
      throw ConfigError("config key `" + section + "." + key + "` must be a number");
    return std::get<double>(v);
  }
  double number_or(const std::string &section, const std::string &key, double fallback) const {
    return has(section, key) ? number(section, key) : fallback;
  }

  int integer(const std::string &section, const std::string &key) const {
    const double v = number(section, key);
    if (v != std::floor(v) || std::abs(v) > 1e9)
      throw ConfigError("config key `" + section + "." + key + "` must be an integer");
    return static_cast<int>(v);
  }
  int integer_or(const std::string &section, const std::string &key, int fallback) const {
    return has(section, key) ? integer(section, key) : fallback;
  }

  bool boolean(const std::string &section, const std::string &key) const {
    const auto &v = get(section, key);
    if (!std::holds_alternative<bool>(v))
      throw ConfigError("config key `" + section + "." + key + "` must be true or false");
    return std::get<bool>(v);
  }
  bool boolean_or(const std::string &section, const std::string &key, bool fallback) const {
    return has(section, key) ? boolean(section, key) : fallback;
  }

  std::string string(const std::string &section, const std::string &key) const {
    const auto &v = get(section, key);
    if (!std::holds_alternative<std::string>(v))
      throw ConfigError("config key `" + section + "." + key + "` must be a quoted string");
    return std::get<std::string>(v);
  }
  std::string string_or(const std::string &section, const std::string &key, const std::string &fallback) const {
    return has(section, key) ? string(section, key) : fallback;
  }

  /// Rejects keys outside `allowed` so typos do not pass silently.
  void require_known(const std::string &section, const std::set<std::string> &allowed) const {
    auto it = sections_.find(section);
    if (it == sections_.end())
      return;
    for (const auto &[key, value] : it->second)
      if (!allowed.count(key))
        throw ConfigError("unknown config key `" + section + "." + key + "`");
  }

  std::vector<std::string> section_names() const {
    std::vector<std::string> out;
    for (const auto &[name, body] : sections_)
      out.push_back(name);
    return out;
  }

private:
  const Value &get(const std::string &section, const std::string &key) const {
    auto it = sections_.find(section);
    if (it == sections_.end())
      throw ConfigError("missing config section [" + section + "] (needed for `" + section + "." + key + "`)");
    auto kv = it->second.find(key);
    if (kv == it->second.end())
      throw ConfigError("missing config key `" + section + "." + key + "`");
    return kv->second;
  }

  static std::string strip(const std::string &s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b])))
      ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])))
      --e;
    return s.substr(b, e - b);
  }

  static std::string strip_comment(const std::string &s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"')
        quoted = !quoted;
      else if (s[i] == '#' && !quoted)
        return s.substr(0, i);
    }
    return s;
  }

  static bool is_identifier(const std::string &s) {
    for (char c : s)
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'))
        return false;
    return !s.empty();
  }

  static Value parse_value(const std::string &raw, std::size_t line_no) {
    if (raw.empty())
      throw ParseError("config line " + std::to_string(line_no) + ": missing value");
    if (raw.front() == '"') {
      if (raw.size() < 2 || raw.back() != '"')
        throw ParseError("config line " + std::to_string(line_no) + ": unterminated string");
      return raw.substr(1, raw.size() - 2);
    }
    if (raw == "true")
      return true;
    if (raw == "false")
      return false;
    char *end = nullptr;
    const double v = std::strtod(raw.c_str(), &end);
    if (end != raw.c_str() + raw.size() || !std::isfinite(v))
      throw ParseError("config line " + std::to_string(line_no) + ": cannot parse value '" + raw + "'");
    return v;
  }

  std::map<std::string, std::map<std::string, Value>> sections_;
};

} // namespace printchain
