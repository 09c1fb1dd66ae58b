#include "panning/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace panning::ckpt {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'P', 'A', 'N', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T get(std::ifstream& f, const char* what) {
  T v;
  f.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!f) throw std::runtime_error(std::string("checkpoint: truncated reading ") + what);
  return v;
}

}  // namespace

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

const std::vector<double>* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, d] : arrays)
    if (n == name) return &d;
  return nullptr;
}

void Checkpoint::set(const std::string& name, std::vector<double> data) {
  for (auto& [n, d] : arrays)
    if (n == name) {
      d = std::move(data);
      return;
    }
  arrays.emplace_back(name, std::move(data));
}

void save(const Checkpoint& c, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  f.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(f, 1);
  put<std::uint64_t>(f, fnv1a64(c.spec_json));
  put<std::uint32_t>(f, static_cast<std::uint32_t>(c.spec_json.size()));
  f.write(c.spec_json.data(), static_cast<std::streamsize>(c.spec_json.size()));
  put<std::uint32_t>(f, static_cast<std::uint32_t>(c.arrays.size()));
  for (const auto& [name, data] : c.arrays) {
    put<std::uint32_t>(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint64_t>(f, data.size());
    f.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const auto version = get<std::uint32_t>(f, "version");
  if (version != 1)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const auto digest = get<std::uint64_t>(f, "digest");
  const auto jlen = get<std::uint32_t>(f, "spec length");
  Checkpoint c;
  c.spec_json.resize(jlen);
  f.read(c.spec_json.data(), jlen);
  if (!f) throw std::runtime_error("checkpoint: truncated spec in " + path);
  if (fnv1a64(c.spec_json) != digest)
    throw std::runtime_error("checkpoint: spec digest mismatch in " + path);
  const auto count = get<std::uint32_t>(f, "array count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto nlen = get<std::uint32_t>(f, "array name length");
    std::string name(nlen, '\0');
    f.read(name.data(), nlen);
    const auto n = get<std::uint64_t>(f, "array length");
    std::vector<double> data(n);
    f.read(reinterpret_cast<char*>(data.data()),
           static_cast<std::streamsize>(n * sizeof(double)));
    if (!f) throw std::runtime_error("checkpoint: truncated array " + name + " in " + path);
    c.arrays.emplace_back(std::move(name), std::move(data));
  }
  return c;
}

}  // namespace panning::ckpt
