#include "panning/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

#include "panning/rng.hpp"

namespace panning::data {

namespace {

std::uint32_t read_be32(std::ifstream& f, const std::string& path, std::size_t offset) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  if (!f)
    throw std::runtime_error(path + ": truncated at byte offset " + std::to_string(offset));
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream fi(images_path, std::ios::binary);
  if (!fi) throw std::runtime_error("cannot open " + images_path);
  const std::uint32_t imagic = read_be32(fi, images_path, 0);
  if (imagic != 0x00000803)
    throw std::runtime_error(images_path + ": bad magic at byte offset 0, got 0x" +
                             [&] { char b[16]; std::snprintf(b, sizeof(b), "%08x", imagic); return std::string(b); }());
  const std::uint32_t n = read_be32(fi, images_path, 4);
  const std::uint32_t rows = read_be32(fi, images_path, 8);
  const std::uint32_t cols = read_be32(fi, images_path, 12);

  std::ifstream fl(labels_path, std::ios::binary);
  if (!fl) throw std::runtime_error("cannot open " + labels_path);
  const std::uint32_t lmagic = read_be32(fl, labels_path, 0);
  if (lmagic != 0x00000801)
    throw std::runtime_error(labels_path + ": bad magic at byte offset 0, got 0x" +
                             [&] { char b[16]; std::snprintf(b, sizeof(b), "%08x", lmagic); return std::string(b); }());
  const std::uint32_t ln = read_be32(fl, labels_path, 4);
  if (ln != n)
    throw std::runtime_error(labels_path + ": label count " + std::to_string(ln) +
                             " != image count " + std::to_string(n));

  Dataset d;
  d.c = 1;
  d.h = static_cast<int>(rows);
  d.w = static_cast<int>(cols);
  const std::size_t dim = static_cast<std::size_t>(rows) * cols;
  d.images.resize(static_cast<std::size_t>(n) * dim);
  std::vector<unsigned char> buf(dim);
  for (std::uint32_t i = 0; i < n; ++i) {
    fi.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(dim));
    if (!fi)
      throw std::runtime_error(images_path + ": truncated at byte offset " +
                               std::to_string(16 + static_cast<std::size_t>(i) * dim));
    for (std::size_t j = 0; j < dim; ++j)
      d.images[static_cast<std::size_t>(i) * dim + j] = buf[j] / 255.0;
  }
  d.labels.resize(n);
  int max_label = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    char c;
    fl.read(&c, 1);
    if (!fl)
      throw std::runtime_error(labels_path + ": truncated at byte offset " +
                               std::to_string(8 + i));
    d.labels[i] = static_cast<unsigned char>(c);
    max_label = std::max(max_label, d.labels[i]);
  }
  d.classes = max_label + 1;
  return d;
}

Standardizer compute_stats(const Dataset& d) {
  double sum = 0.0, sq = 0.0;
  for (double v : d.images) {
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(d.images.size());
  Standardizer s;
  s.mean = sum / n;
  s.stddev = std::sqrt(std::max(1e-12, sq / n - s.mean * s.mean));
  return s;
}

void standardize(Dataset& d, const Standardizer& s) {
  const double inv = 1.0 / s.stddev;
  for (double& v : d.images) v = (v - s.mean) * inv;
}

std::pair<Dataset, Dataset> load_mnist(const std::string& root) {
  Dataset train = load_idx(root + "/train-images-idx3-ubyte", root + "/train-labels-idx1-ubyte");
  Dataset test = load_idx(root + "/t10k-images-idx3-ubyte", root + "/t10k-labels-idx1-ubyte");
  const Standardizer s = compute_stats(train);  // train statistics only
  standardize(train, s);
  standardize(test, s);
  test.classes = train.classes;
  return {std::move(train), std::move(test)};
}

Dataset synthetic_classification(int classes, int per_class, int dims,
                                 std::uint64_t seed, double separation) {
  Dataset d;
  d.classes = classes;
  d.c = 1;
  d.h = 1;
  d.w = dims;
  std::mt19937_64 rng = make_rng(seed, /*stream=*/0xda7a);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> means(static_cast<std::size_t>(classes));
  for (auto& m : means) {
    m.resize(static_cast<std::size_t>(dims));
    double norm = 0.0;
    for (double& v : m) {
      v = unit(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : m) v = v / norm * separation;
  }
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < per_class; ++i) {
      for (int j = 0; j < dims; ++j)
        d.images.push_back(means[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] + unit(rng));
      d.labels.push_back(c);
    }
  return d;
}

ad::Tensor gather_images(const Dataset& d, const std::vector<int>& idx,
                         bool conv_layout) {
  const std::size_t dim = d.sample_dim();
  std::vector<double> out;
  out.reserve(idx.size() * dim);
  for (int i : idx)
    out.insert(out.end(), d.images.begin() + static_cast<std::ptrdiff_t>(i * dim),
               d.images.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
  const int n = static_cast<int>(idx.size());
  if (conv_layout) return ad::Tensor({n, d.c, d.h, d.w}, std::move(out));
  return ad::Tensor({n, static_cast<int>(dim)}, std::move(out));
}

std::vector<int> gather_labels(const Dataset& d, const std::vector<int>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(d.labels[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace panning::data
