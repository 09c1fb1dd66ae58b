#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

namespace panning::ad {

// Dense row-major n-d array of doubles.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(count(shape), 0.0);
  }
  Tensor(std::vector<int> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {}

  static std::size_t count(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  std::size_t size() const { return data.size(); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

using GradientVector = std::vector<double>;

}  // namespace panning::ad
