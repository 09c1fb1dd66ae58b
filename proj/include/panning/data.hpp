#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "panning/tensor.hpp"

namespace panning::data {

// Images held flat, one sample per row, values raw in [0,1] until
// standardize() is applied.
struct Dataset {
  std::vector<double> images;
  std::vector<int> labels;
  int classes = 0;
  int c = 1, h = 0, w = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_dim() const { return static_cast<std::size_t>(c) * h * w; }
};

struct Standardizer {
  double mean = 0.0;
  double stddev = 1.0;
};

// IDX files: big-endian header, magic 0x803 (images) / 0x801 (labels).
// Throws std::runtime_error naming the byte offset on malformed input.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

Standardizer compute_stats(const Dataset& d);
void standardize(Dataset& d, const Standardizer& s);

// Loads train/test IDX pairs from root; both splits standardized with
// training-split statistics.
std::pair<Dataset, Dataset> load_mnist(const std::string& root);

// Gaussian blobs with class-separated means; deterministic per seed.
Dataset synthetic_classification(int classes, int per_class, int dims,
                                 std::uint64_t seed, double separation = 5.0);

// Assembles [n,C,H,W] (conv) or [n,dim] (flat) batches.
ad::Tensor gather_images(const Dataset& d, const std::vector<int>& idx,
                         bool conv_layout);
std::vector<int> gather_labels(const Dataset& d, const std::vector<int>& idx);

}  // namespace panning::data
