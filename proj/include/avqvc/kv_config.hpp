#pragma once

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "avqvc/error.hpp"

namespace avqvc {

// Flat `key = value` text record. Lines starting with '#' are comments.
// Keys are kept sorted so the serialized form is canonical.
class KeyValues {
 public:
  using Map = std::map<std::string, std::string>;

  KeyValues() = default;
  explicit KeyValues(Map entries) : entries_(std::move(entries)) {}

  static KeyValues parse(const std::string& text, const std::string& origin = "<text>") {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto trimmed = trim(line);
      if (trimmed.empty() || trimmed[0] == '#') continue;
      auto eq = trimmed.find('=');
      if (eq == std::string::npos) {
        throw Error(ErrorKind::config,
                    origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
      }
      auto key = trim(trimmed.substr(0, eq));
      auto value = trim(trimmed.substr(eq + 1));
      if (key.empty()) {
        throw Error(ErrorKind::config, origin + ":" + std::to_string(lineno) + ": empty key");
      }
      kv.entries_[key] = value;
    }
    return kv;
  }

  static KeyValues load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  std::string to_string() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
    return out;
  }

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  void set(const std::string& key, double value) { entries_[key] = format_double(value); }
  void set(const std::string& key, long long value) { entries_[key] = std::to_string(value); }
  void set(const std::string& key, int value) { entries_[key] = std::to_string(value); }
  void set(const std::string& key, std::uint64_t value) { entries_[key] = std::to_string(value); }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const Map& entries() const { return entries_; }

  void merge(const KeyValues& other) {
    for (const auto& [k, v] : other.entries_) entries_[k] = v;
  }

  const std::string& get(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw Error(ErrorKind::config, "missing key '" + key + "'");
    return it->second;
  }

  double get_double(const std::string& key) const {
    const auto& s = get(key);
    try {
      std::size_t pos = 0;
      double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw Error(ErrorKind::config, "key '" + key + "': not a number: '" + s + "'");
    }
  }

  template <typename Int = long long>
  Int get_int(const std::string& key) const {
    const auto& s = get(key);
    Int v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw Error(ErrorKind::config, "key '" + key + "': not an integer: '" + s + "'");
    }
    return v;
  }

  // Shortest representation that parses back to the same double.
  static std::string format_double(double v) {
    char buf[64];
    for (int prec = 1; prec <= 17; ++prec) {
      std::snprintf(buf, sizeof buf, "%.*g", prec, v);
      if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
  }

 private:
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  Map entries_;
};

}  // namespace avqvc
