#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "panning/data.hpp"

using namespace panning;

namespace {

// 2 images of 2x2 pixels + 2 labels, byte-exact reference fixture.
const char* kImagesHex =
    "00000803"  // magic
    "00000002"  // n
    "00000002"  // rows
    "00000002"  // cols
    "00ff8040"  // image 0
    "10203040";  // image 1
const char* kLabelsHex =
    "00000801"
    "00000002"
    "0307";

std::vector<unsigned char> from_hex(const std::string& hex) {
  std::vector<unsigned char> out;
  for (std::size_t i = 0; i + 1 < hex.size(); i += 2)
    out.push_back(static_cast<unsigned char>(std::stoi(hex.substr(i, 2), nullptr, 16)));
  return out;
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& b) {
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(b.data()),
          static_cast<std::streamsize>(b.size()));
}

struct Fixture {
  std::string images = "test_data_images.idx";
  std::string labels = "test_data_labels.idx";
  Fixture() {
    write_bytes(images, from_hex(kImagesHex));
    write_bytes(labels, from_hex(kLabelsHex));
  }
  ~Fixture() {
    std::remove(images.c_str());
    std::remove(labels.c_str());
  }
};

}  // namespace

TEST_CASE("load_idx parses the hex fixture byte-exactly") {
  Fixture fx;
  const data::Dataset d = data::load_idx(fx.images, fx.labels);
  CHECK(d.size() == 2);
  CHECK(d.h == 2);
  CHECK(d.w == 2);
  CHECK(d.labels == std::vector<int>{3, 7});
  const std::vector<double> want{0.0, 255.0 / 255, 128.0 / 255, 64.0 / 255,
                                 16.0 / 255, 32.0 / 255, 48.0 / 255, 64.0 / 255};
  REQUIRE(d.images.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i)
    CHECK(d.images[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("re-reading yields identical arrays") {
  Fixture fx;
  const data::Dataset a = data::load_idx(fx.images, fx.labels);
  const data::Dataset b = data::load_idx(fx.images, fx.labels);
  CHECK(a.images == b.images);
  CHECK(a.labels == b.labels);
}

TEST_CASE("bad magic is rejected with byte offset") {
  Fixture fx;
  auto bytes = from_hex(kImagesHex);
  bytes[3] = 0x04;
  write_bytes(fx.images, bytes);
  try {
    data::load_idx(fx.images, fx.labels);
    FAIL("expected throw");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }
}

TEST_CASE("truncated image payload is rejected") {
  Fixture fx;
  auto bytes = from_hex(kImagesHex);
  bytes.resize(bytes.size() - 3);
  write_bytes(fx.images, bytes);
  CHECK_THROWS_AS(data::load_idx(fx.images, fx.labels), std::runtime_error);
}

TEST_CASE("label/image count mismatch is rejected") {
  Fixture fx;
  auto bytes = from_hex(kLabelsHex);
  bytes[7] = 0x03;
  bytes.push_back(0x01);
  write_bytes(fx.labels, bytes);
  CHECK_THROWS_AS(data::load_idx(fx.images, fx.labels), std::runtime_error);
}

TEST_CASE("standardization uses the supplied statistics") {
  Fixture fx;
  data::Dataset d = data::load_idx(fx.images, fx.labels);
  const data::Standardizer s = data::compute_stats(d);
  const double mean =
      std::accumulate(d.images.begin(), d.images.end(), 0.0) / d.images.size();
  CHECK(s.mean == doctest::Approx(mean).epsilon(1e-12));
  data::standardize(d, s);
  const double mean2 =
      std::accumulate(d.images.begin(), d.images.end(), 0.0) / d.images.size();
  CHECK(mean2 == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("synthetic blobs are deterministic and separable") {
  const data::Dataset a = data::synthetic_classification(2, 50, 8, 13);
  const data::Dataset b = data::synthetic_classification(2, 50, 8, 13);
  CHECK(a.images == b.images);
  CHECK(a.labels == b.labels);
  CHECK(a.size() == 100);

  // nearest-class-mean probe separates blobs at 5 sigma
  std::vector<std::vector<double>> mean(2, std::vector<double>(8, 0.0));
  std::vector<int> count(2, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++count[static_cast<std::size_t>(a.labels[i])];
    for (int j = 0; j < 8; ++j)
      mean[static_cast<std::size_t>(a.labels[i])][static_cast<std::size_t>(j)] +=
          a.images[i * 8 + static_cast<std::size_t>(j)];
  }
  for (int c = 0; c < 2; ++c)
    for (int j = 0; j < 8; ++j)
      mean[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] /= count[static_cast<std::size_t>(c)];
  int correct = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double best = 1e300;
    int arg = -1;
    for (int c = 0; c < 2; ++c) {
      double dist = 0.0;
      for (int j = 0; j < 8; ++j) {
        const double diff = a.images[i * 8 + static_cast<std::size_t>(j)] -
                            mean[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
        dist += diff * diff;
      }
      if (dist < best) { best = dist; arg = c; }
    }
    if (arg == a.labels[i]) ++correct;
  }
  CHECK(static_cast<double>(correct) / a.size() > 0.9);
}

TEST_CASE("gather respects layouts") {
  const data::Dataset d = data::synthetic_classification(2, 3, 4, 5);
  const ad::Tensor flat = data::gather_images(d, {0, 2}, false);
  CHECK(flat.shape == std::vector<int>{2, 4});
  CHECK(data::gather_labels(d, {0, 2}).size() == 2);
}
