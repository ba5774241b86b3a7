#include "conglude/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "conglude/errors.hpp"

namespace conglude {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  }
  return true;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
  KeyValueConfig cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    // Strip comments outside quotes.
    bool quoted = false;
    std::string body;
    for (char c : line) {
      if (c == '"') quoted = !quoted;
      if (c == '#' && !quoted) break;
      body += c;
    }
    body = trim(body);
    if (body.empty()) continue;
    if (body.front() == '[') throw FormatError(where + ": tables are not supported");
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw FormatError(where + ": expected key = value");
    const std::string key = trim(body.substr(0, eq));
    std::string value = trim(body.substr(eq + 1));
    if (!valid_key(key)) throw FormatError(where + ": invalid key '" + key + "'");
    if (value.empty()) throw FormatError(where + ": missing value for '" + key + "'");
    if (value.front() == '"') {
      if (value.size() < 2 || value.back() != '"') throw FormatError(where + ": unterminated string");
      value = value.substr(1, value.size() - 2);
    }
    if (cfg.values_.contains(key)) throw FormatError(where + ": duplicate key '" + key + "'");
    cfg.values_[key] = value;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& s = it->second;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError(origin_ + ": '" + key + "' expects a number, got '" + s + "'");
  }
  return v;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& s = it->second;
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError(origin_ + ": '" + key + "' expects a non-negative integer, got '" + s + "'");
  }
  return v;
}

std::size_t KeyValueConfig::get_size(const std::string& key, std::size_t fallback) const {
  return static_cast<std::size_t>(get_u64(key, fallback));
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "on" || it->second == "1") return true;
  if (it->second == "false" || it->second == "off" || it->second == "0") return false;
  throw FormatError(origin_ + ": '" + key + "' expects true/false, got '" + it->second + "'");
}

void KeyValueConfig::require_known(const std::set<std::string>& allowed) const {
  for (const auto& [k, v] : values_) {
    if (!allowed.contains(k)) throw FormatError(origin_ + ": unknown key '" + k + "'");
  }
}

}  // namespace conglude
