#pragma once

#include <filesystem>
#include <cstdint>
#include <map>
#include <set>
#include <string>

namespace conglude {

/// Flat `key = value` file (a TOML subset: no tables or arrays).
/// Strings may be double-quoted; booleans are true/false; '#' starts a
/// comment outside quotes.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return values_.contains(key); }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Throws FormatError naming the first key not in `allowed`.
  void require_known(const std::set<std::string>& allowed) const;

 private:
  std::map<std::string, std::string> values_;
  std::string origin_;
};

}  // namespace conglude
