#pragma once

// Flat key = value configuration files with [section] headers. Comments
// start with '#' or ';'. Keys outside any section live in section "".

#include "ippgd/operator.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ippgd {

/// Configuration error; the message names the offending key as
/// "section.key".
class ConfigError : public Error {
 public:
  using Error::Error;
};

class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<config>");
  static Config load(const std::string& path);

  bool has_section(const std::string& section) const;
  bool has(const std::string& section, const std::string& key) const;
  std::vector<std::string> sections() const;

  std::string get_string(const std::string& section, const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  int get_int(const std::string& section, const std::string& key, int fallback) const;
  std::uint64_t get_seed(const std::string& section, const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  /// Comma-separated list; empty items are rejected.
  std::vector<std::string> get_list(const std::string& section, const std::string& key,
                                    const std::vector<std::string>& fallback) const;
  std::vector<double> get_doubles(const std::string& section, const std::string& key,
                                  const std::vector<double>& fallback) const;

  /// Throws ConfigError for the first key never read by a getter.
  void reject_unused() const;
  const std::string& origin() const { return origin_; }
  /// Throws ConfigError "origin:line: section.key: what".
  [[noreturn]] void fail(const std::string& section, const std::string& key, const std::string& what) const;

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  const Entry* find(const std::string& section, const std::string& key) const;

  std::map<std::string, std::map<std::string, Entry>> values_;
  mutable std::set<std::pair<std::string, std::string>> used_;
  std::string origin_;
};

/// "section.key", or "key" for the unnamed section.
std::string config_key_name(const std::string& section, const std::string& key);

}  // namespace ippgd
