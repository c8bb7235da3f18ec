#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace cvxql {

// Flat key = value text. "[section]" headers prefix the following keys as
// "section.key"; '#' starts a comment. Duplicate keys are rejected.
class Config {
 public:
  static Config parse(std::istream& in, const std::string& source = "<input>");
  static Config load(const std::filesystem::path& path);

  // Throws ConfigError naming the first key not in `allowed`.
  void require_known(const std::set<std::string>& allowed) const;

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  // Overrides or adds a key (e.g. from the command line).
  void set(const std::string& key, const std::string& value);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Comma separated.
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;

  // FNV-1a over the sorted "key=value" lines, as 16 hex digits.
  std::string hash() const;

  const std::string& source() const { return source_; }

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  [[noreturn]] void fail(const std::string& key, const std::string& message) const;

  std::string source_;
  std::map<std::string, Entry> entries_;
};

}  // namespace cvxql
