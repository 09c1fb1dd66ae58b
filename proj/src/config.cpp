#include "panning/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace panning::config {

namespace {

std::string trim(const std::string& s) {
  const std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

void KeyValues::load_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) parse_line(line, path, ++lineno);
}

void KeyValues::parse_line(const std::string& line, const std::string& where,
                           int lineno) {
  std::string s = line;
  const std::size_t hash = s.find('#');
  if (hash != std::string::npos) s.erase(hash);
  s = trim(s);
  if (s.empty()) return;
  const std::size_t eq = s.find('=');
  if (eq == std::string::npos)
    throw std::runtime_error(where + ":" + std::to_string(lineno) +
                             ": expected key=value, got '" + s + "'");
  const std::string key = trim(s.substr(0, eq));
  const std::string value = trim(s.substr(eq + 1));
  if (key.empty())
    throw std::runtime_error(where + ":" + std::to_string(lineno) + ": empty key");
  kv_[key] = value;
}

void KeyValues::set(const std::string& key, const std::string& value) {
  kv_[key] = value;
}

bool KeyValues::has(const std::string& key) const { return kv_.count(key) > 0; }

std::string KeyValues::get(const std::string& key, const std::string& fallback) const {
  const auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

long KeyValues::get_long(const std::string& key, long fallback) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    return std::stol(it->second);
  } catch (const std::exception&) {
    throw std::runtime_error("config key " + key + ": not an integer: " + it->second);
  }
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw std::runtime_error("config key " + key + ": not a number: " + it->second);
  }
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw std::runtime_error("config key " + key + ": not a bool: " + it->second);
}

std::uint64_t KeyValues::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw std::runtime_error("config key " + key + ": not an integer: " + it->second);
  }
}

std::vector<double> KeyValues::get_doubles(const std::string& key) const {
  std::vector<double> out;
  const auto it = kv_.find(key);
  if (it == kv_.end()) return out;
  std::stringstream ss(it->second);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw std::runtime_error("config key " + key + ": bad number '" + tok + "'");
    }
  }
  return out;
}

std::vector<int> KeyValues::get_ints(const std::string& key) const {
  std::vector<int> out;
  for (double v : get_doubles(key)) out.push_back(static_cast<int>(v));
  return out;
}

void KeyValues::write_file(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write config file " + path);
  for (const auto& [k, v] : kv_) f << k << '=' << v << '\n';
}

}  // namespace panning::config
