#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace panning::ckpt {

// Flat binary container: magic, version, FNV-1a digest of the spec JSON,
// the spec JSON itself (layer table), then named 64-bit little-endian
// double arrays. Round-trips bitwise.
struct Checkpoint {
  std::string spec_json;
  std::vector<std::pair<std::string, std::vector<double>>> arrays;

  const std::vector<double>* find(const std::string& name) const;
  void set(const std::string& name, std::vector<double> data);
};

std::uint64_t fnv1a64(const std::string& s);

void save(const Checkpoint& c, const std::string& path);
Checkpoint load(const std::string& path);  // throws std::runtime_error

}  // namespace panning::ckpt
