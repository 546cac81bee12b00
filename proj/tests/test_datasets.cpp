#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "balltrain/dataset.hpp"
#include "balltrain/gemm.hpp"
#include "balltrain/rng.hpp"

using namespace balltrain;
namespace fs = std::filesystem;

namespace {

std::string tmp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "balltrain_tests";
  fs::create_directories(dir);
  return (dir / name).string();
}

void write_be32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v)};
  f.write(reinterpret_cast<char*>(b), 4);
}

// 2-image 2x2 IDX fixture with known bytes
void write_fixture(const std::string& images, const std::string& labels,
                   std::uint32_t image_magic = 0x803, std::uint32_t label_magic = 0x801) {
  std::ofstream imf(images, std::ios::binary);
  write_be32(imf, image_magic);
  write_be32(imf, 2);
  write_be32(imf, 2);
  write_be32(imf, 2);
  const unsigned char px[8] = {0, 51, 102, 255, 10, 20, 30, 40};
  imf.write(reinterpret_cast<const char*>(px), 8);
  std::ofstream lbf(labels, std::ios::binary);
  write_be32(lbf, label_magic);
  write_be32(lbf, 2);
  const unsigned char ys[2] = {3, 7};
  lbf.write(reinterpret_cast<const char*>(ys), 2);
}

// least-squares linear fit oracle: can a linear map separate the blobs?
double linear_fit_train_accuracy(const Dataset& ds) {
  // fit y in {-1,+1} = w.x + b by normal equations (3x3 system)
  double a[9] = {0}, rhs[3] = {0};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double x0 = ds.inputs[i].data[0], x1 = ds.inputs[i].data[1];
    const double t = ds.labels[i] == 0 ? -1.0 : 1.0;
    const double row[3] = {x0, x1, 1.0};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) a[r * 3 + c] += row[r] * row[c];
      rhs[r] += row[r] * t;
    }
  }
  // gaussian elimination
  for (int p = 0; p < 3; ++p) {
    int piv = p;
    for (int r = p + 1; r < 3; ++r)
      if (std::abs(a[r * 3 + p]) > std::abs(a[piv * 3 + p])) piv = r;
    for (int c = 0; c < 3; ++c) std::swap(a[p * 3 + c], a[piv * 3 + c]);
    std::swap(rhs[p], rhs[piv]);
    for (int r = p + 1; r < 3; ++r) {
      const double f = a[r * 3 + p] / a[p * 3 + p];
      for (int c = p; c < 3; ++c) a[r * 3 + c] -= f * a[p * 3 + c];
      rhs[r] -= f * rhs[p];
    }
  }
  double w[3];
  for (int r = 2; r >= 0; --r) {
    double s = rhs[r];
    for (int c = r + 1; c < 3; ++c) s -= a[r * 3 + c] * w[c];
    w[r] = s / a[r * 3 + r];
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double score = w[0] * ds.inputs[i].data[0] + w[1] * ds.inputs[i].data[1] + w[2];
    if ((score > 0 ? 1 : 0) == ds.labels[i]) ++correct;
  }
  return double(correct) / double(ds.size());
}

}  // namespace

TEST_CASE("load_idx fixture with known bytes") {
  auto im = tmp_path("fix_images"), lb = tmp_path("fix_labels");
  write_fixture(im, lb);
  Dataset ds = load_idx(im, lb);
  CHECK(ds.size() == 2);
  CHECK(ds.input_shape() == Shape{1, 2, 2});
  CHECK(ds.labels == std::vector<int>{3, 7});
  CHECK(ds.inputs[0].data[0] == 0.0f);
  CHECK(ds.inputs[0].data[1] == doctest::Approx(51.0f / 255.0f));
  CHECK(ds.inputs[0].data[3] == 1.0f);
  CHECK(ds.inputs[1].data[2] == doctest::Approx(30.0f / 255.0f));
  ds.validate();
}

TEST_CASE("load_idx rejects wrong magic") {
  auto im = tmp_path("bad_images"), lb = tmp_path("bad_labels");
  // labels file carrying the image magic
  write_fixture(im, lb, 0x803, 0x803);
  CHECK_THROWS_WITH_AS(load_idx(im, lb), doctest::Contains("wrong magic"), ParseError);
}

TEST_CASE("load_idx rejects truncation and count mismatch") {
  auto im = tmp_path("trunc_images"), lb = tmp_path("trunc_labels");
  write_fixture(im, lb);
  fs::resize_file(im, 20);  // cut into pixel data
  CHECK_THROWS_WITH_AS(load_idx(im, lb), doctest::Contains("truncated"), ParseError);

  write_fixture(im, lb);
  {
    std::ofstream lbf(lb, std::ios::binary);
    write_be32(lbf, 0x801);
    write_be32(lbf, 3);
    const unsigned char ys[3] = {1, 2, 3};
    lbf.write(reinterpret_cast<const char*>(ys), 3);
  }
  CHECK_THROWS_WITH_AS(load_idx(im, lb), doctest::Contains("count mismatch"), ParseError);
}

TEST_CASE("idx round-trip is bit-identical") {
  auto im = tmp_path("rt_images"), lb = tmp_path("rt_labels");
  write_fixture(im, lb);
  Dataset ds = load_idx(im, lb);
  auto im2 = tmp_path("rt_images2"), lb2 = tmp_path("rt_labels2");
  save_idx(ds, im2, lb2);
  Dataset ds2 = load_idx(im2, lb2);
  REQUIRE(ds2.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(ds2.inputs[i].data == ds.inputs[i].data);
    CHECK(ds2.labels[i] == ds.labels[i]);
  }
}

TEST_CASE("fuzzed idx bytes fail cleanly") {
  Rng rng(5);
  for (int iter = 0; iter < 50; ++iter) {
    auto im = tmp_path("fuzz_images"), lb = tmp_path("fuzz_labels");
    std::ofstream f(im, std::ios::binary);
    const std::size_t n = rng.below(64);
    for (std::size_t i = 0; i < n; ++i) {
      char b = char(rng.below(256));
      f.write(&b, 1);
    }
    f.close();
    write_fixture(lb, tmp_path("fuzz_labels2"));
    CHECK_THROWS_AS(load_idx(im, lb), ParseError);
  }
}

TEST_CASE("official MNIST counts (when BALLTRAIN_MNIST_DIR is set)") {
  const char* dir = std::getenv("BALLTRAIN_MNIST_DIR");
  if (!dir) {
    MESSAGE("skipped: BALLTRAIN_MNIST_DIR not set");
    return;
  }
  Dataset ds = load_idx(std::string(dir) + "/train-images-idx3-ubyte",
                        std::string(dir) + "/train-labels-idx1-ubyte");
  CHECK(ds.size() == 60000);
  CHECK(ds.input_shape() == Shape{1, 28, 28});
  CHECK(ds.num_classes == 10);
}

TEST_CASE("synthetic_blobs degenerate spread and determinism") {
  const std::vector<std::pair<double, double>> centers = {{0.3, 0.3}, {0.7, 0.7}};
  Dataset d0 = synthetic_blobs(5, centers, 0.0, 1);
  for (std::size_t i = 0; i < d0.size(); ++i) {
    const auto& c = centers[std::size_t(d0.labels[i])];
    CHECK(d0.inputs[i].data[0] == float(c.first));
    CHECK(d0.inputs[i].data[1] == float(c.second));
  }

  Dataset a = synthetic_blobs(50, centers, 0.05, 9);
  Dataset b = synthetic_blobs(50, centers, 0.05, 9);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.inputs[i].data == b.inputs[i].data);

  CHECK_THROWS_AS(synthetic_blobs(5, {{0.1, 0.5}}, 0.05, 1), ValidationError);
}

TEST_CASE("synthetic_blobs separable by a linear fit oracle") {
  Dataset ds = synthetic_blobs(200, {{0.3, 0.3}, {0.7, 0.7}}, 0.05, 3);
  ds.validate();
  CHECK(linear_fit_train_accuracy(ds) == 1.0);
}

TEST_CASE("subset stratification and determinism") {
  Dataset ds;
  ds.num_classes = 10;
  ds.name = "balanced";
  Rng rng(4);
  for (int c = 0; c < 10; ++c)
    for (int i = 0; i < 30; ++i) {
      ds.inputs.push_back(Tensor<float>({2}, {float(rng.uniform01()), float(rng.uniform01())}));
      ds.labels.push_back(c);
    }

  Dataset s = subset(ds, 100, 7);
  CHECK(s.size() == 100);
  std::vector<int> counts(10, 0);
  for (int y : s.labels) ++counts[std::size_t(y)];
  for (int c : counts) CHECK(c == 10);

  Dataset s2 = subset(ds, 100, 7);
  CHECK(s.labels == s2.labels);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(s.inputs[i].data == s2.inputs[i].data);

  Dataset all = subset(ds, ds.size(), 7);
  CHECK(all.size() == ds.size());
  std::vector<int> all_counts(10, 0);
  for (int y : all.labels) ++all_counts[std::size_t(y)];
  for (int c : all_counts) CHECK(c == 30);

  CHECK_THROWS_AS(subset(ds, ds.size() + 1, 7), ValidationError);
}
