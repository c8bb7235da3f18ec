#include "cvxql/config.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cvxql/errors.hpp"

namespace cvxql {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                    c == '-' || c == '.';
    if (!ok) return false;
  }
  return true;
}

}  // namespace

Config Config::parse(std::istream& in, const std::string& source) {
  Config cfg;
  cfg.source_ = source;
  std::string section;
  std::string raw;
  int line = 0;
  auto error = [&](const std::string& msg) {
    throw ConfigError(source + ":" + std::to_string(line) + ": " + msg);
  };
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') error("unterminated section header");
      section = trim(text.substr(1, text.size() - 2));
      if (!valid_name(section)) error("invalid section name '" + section + "'");
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) error("expected key = value, got '" + text + "'");
    const std::string name = trim(text.substr(0, eq));
    if (!valid_name(name)) error("invalid key '" + name + "'");
    const std::string key = section.empty() ? name : section + "." + name;
    if (cfg.entries_.count(key)) error("duplicate key '" + key + "'");
    cfg.entries_[key] = {trim(text.substr(eq + 1)), line};
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse(in, path.string());
}

void Config::fail(const std::string& key, const std::string& message) const {
  const auto it = entries_.find(key);
  const std::string where = it == entries_.end() || it->second.line == 0
                                ? source_
                                : source_ + ":" + std::to_string(it->second.line);
  throw ConfigError(where + ": key '" + key + "': " + message);
}

void Config::require_known(const std::set<std::string>& allowed) const {
  for (const auto& [key, entry] : entries_) {
    if (!allowed.count(key)) fail(key, "unknown key");
  }
}

void Config::set(const std::string& key, const std::string& value) { entries_[key] = {value, 0}; }

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second.value;
}

double Config::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = entries_.at(key).value;
  char* end = nullptr;
  errno = 0;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || errno == ERANGE) fail(key, "expected a number, got '" + v + "'");
  return out;
}

long long Config::get_int(const std::string& key, long long fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = entries_.at(key).value;
  char* end = nullptr;
  errno = 0;
  const long long out = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || errno == ERANGE) {
    // Accept integral values written in floating-point form, e.g. 1e5.
    const double d = get_double(key, 0.0);
    if (d != static_cast<double>(static_cast<long long>(d))) fail(key, "expected an integer, got '" + v + "'");
    return static_cast<long long>(d);
  }
  return out;
}

std::uint64_t Config::get_uint64(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const long long v = get_int(key, 0);
  if (v < 0) fail(key, "expected a non-negative integer");
  return static_cast<std::uint64_t>(v);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = entries_.at(key).value;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(key, "expected true or false, got '" + v + "'");
}

std::vector<double> Config::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<double> out;
  std::stringstream ss(entries_.at(key).value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    char* end = nullptr;
    const double d = std::strtod(item.c_str(), &end);
    if (item.empty() || *end != '\0') fail(key, "expected a comma separated list of numbers");
    out.push_back(d);
  }
  return out;
}

std::string Config::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [key, entry] : entries_) {
    const std::string line = key + "=" + entry.value + "\n";
    for (unsigned char c : line) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace cvxql
