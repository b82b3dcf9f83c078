#pragma once

// Flat `key = value` configuration text: one pair per line, `#` starts a comment, blank
// lines ignored. Later assignments override earlier ones.

#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "foliate/numeric.hpp"

namespace foliate {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using KeyValues = std::map<std::string, std::string>;

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

/// Parses one `key=value` assignment (from a file line or a command-line override).
inline std::pair<std::string, std::string> parse_assignment(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) throw ConfigError("expected 'key = value', got '" + std::string(text) + "'");
  auto key = trim(text.substr(0, eq));
  auto value = trim(text.substr(eq + 1));
  if (key.empty()) throw ConfigError("empty key in '" + std::string(text) + "'");
  return {std::move(key), std::move(value)};
}

inline KeyValues parse_key_values(std::string_view text) {
  KeyValues out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    try {
      auto [k, v] = parse_assignment(line);
      out[k] = v;
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

inline void reject_unknown_keys(const KeyValues& kv, const std::set<std::string>& known) {
  for (const auto& [k, v] : kv)
    if (!known.count(k)) throw ConfigError("unknown config key '" + k + "'");
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

inline std::uint64_t parse_count(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    return parse_double(v);
  } catch (const std::invalid_argument&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

}  // namespace foliate
