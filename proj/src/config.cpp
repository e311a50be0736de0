#include "ippgd/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace ippgd {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

std::string config_key_name(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

Config Config::parse(const std::string& text, const std::string& origin) {
  Config c;
  c.origin_ = origin;
  std::istringstream in(text);
  std::string raw, section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find_first_of("#;");
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line) + ": ";
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(s.substr(1, s.size() - 2));
      if (section.empty()) throw ConfigError(where + "empty section name");
      c.values_[section];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(s.substr(0, eq));
    if (key.empty()) throw ConfigError(where + "missing key");
    auto& sec = c.values_[section];
    if (sec.count(key)) throw ConfigError(where + "duplicate key " + config_key_name(section, key));
    sec[key] = Entry{trim(s.substr(eq + 1)), line};
  }
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

bool Config::has_section(const std::string& section) const { return values_.count(section) > 0; }

bool Config::has(const std::string& section, const std::string& key) const { return find(section, key) != nullptr; }

std::vector<std::string> Config::sections() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : values_) out.push_back(name);
  return out;
}

const Config::Entry* Config::find(const std::string& section, const std::string& key) const {
  const auto s = values_.find(section);
  if (s == values_.end()) return nullptr;
  const auto k = s->second.find(key);
  if (k == s->second.end()) return nullptr;
  used_.insert({section, key});
  return &k->second;
}

void Config::fail(const std::string& section, const std::string& key, const std::string& what) const {
  const auto s = values_.find(section);
  std::string where = origin_;
  if (s != values_.end() && s->second.count(key)) where += ":" + std::to_string(s->second.at(key).line);
  throw ConfigError(where + ": " + config_key_name(section, key) + ": " + what);
}

std::string Config::get_string(const std::string& section, const std::string& key,
                               const std::string& fallback) const {
  const Entry* e = find(section, key);
  return e ? e->value : fallback;
}

std::string Config::require_string(const std::string& section, const std::string& key) const {
  const Entry* e = find(section, key);
  if (!e) throw ConfigError(origin_ + ": missing required key " + config_key_name(section, key));
  if (e->value.empty()) fail(section, key, "empty value");
  return e->value;
}

double Config::get_double(const std::string& section, const std::string& key, double fallback) const {
  const Entry* e = find(section, key);
  if (!e) return fallback;
  try {
    std::size_t pos = 0;
    const double v = std::stod(e->value, &pos);
    if (pos != e->value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    fail(section, key, "expected a number, got '" + e->value + "'");
  }
}

int Config::get_int(const std::string& section, const std::string& key, int fallback) const {
  const Entry* e = find(section, key);
  if (!e) return fallback;
  int v = 0;
  const char* end = e->value.data() + e->value.size();
  const auto r = std::from_chars(e->value.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) fail(section, key, "expected an integer, got '" + e->value + "'");
  return v;
}

std::uint64_t Config::get_seed(const std::string& section, const std::string& key, std::uint64_t fallback) const {
  const Entry* e = find(section, key);
  if (!e) return fallback;
  std::uint64_t v = 0;
  const char* end = e->value.data() + e->value.size();
  const auto r = std::from_chars(e->value.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) fail(section, key, "expected a nonnegative integer, got '" + e->value + "'");
  return v;
}

bool Config::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  const Entry* e = find(section, key);
  if (!e) return fallback;
  const std::string v = lower(e->value);
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  fail(section, key, "expected true or false, got '" + e->value + "'");
}

std::vector<std::string> Config::get_list(const std::string& section, const std::string& key,
                                          const std::vector<std::string>& fallback) const {
  const Entry* e = find(section, key);
  if (!e) return fallback;
  std::vector<std::string> out;
  std::stringstream in(e->value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) fail(section, key, "empty list item");
    out.push_back(item);
  }
  if (out.empty()) fail(section, key, "empty list");
  return out;
}

std::vector<double> Config::get_doubles(const std::string& section, const std::string& key,
                                        const std::vector<double>& fallback) const {
  if (!has(section, key)) return fallback;
  std::vector<double> out;
  for (const auto& item : get_list(section, key, {})) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      fail(section, key, "expected numbers, got '" + item + "'");
    }
  }
  return out;
}

void Config::reject_unused() const {
  for (const auto& [section, keys] : values_) {
    for (const auto& [key, entry] : keys) {
      if (!used_.count({section, key})) {
        throw ConfigError(origin_ + ":" + std::to_string(entry.line) + ": unknown key " +
                          config_key_name(section, key));
      }
    }
  }
}

}  // namespace ippgd
