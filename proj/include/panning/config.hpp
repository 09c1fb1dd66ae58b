#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace panning::config {

// Flat key=value store; '#' starts a comment, keys are namespaced with
// dots (panning.T=100). Writes back sorted so resolved configs diff
// cleanly.
class KeyValues {
 public:
  void load_file(const std::string& path);     // throws with line numbers
  void parse_line(const std::string& line, const std::string& where, int lineno);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  long get_long(const std::string& key, long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;  // comma list
  std::vector<int> get_ints(const std::string& key) const;

  void write_file(const std::string& path) const;
  const std::map<std::string, std::string>& items() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace panning::config
