#include "balltrain/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "balltrain/rng.hpp"

namespace balltrain {

void Dataset::validate() const {
  if (inputs.size() != labels.size())
    throw ValidationError("dataset: " + std::to_string(inputs.size()) + " inputs vs " +
                          std::to_string(labels.size()) + " labels");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].shape != inputs[0].shape)
      throw ValidationError("dataset: example " + std::to_string(i) + " shape differs");
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw ValidationError("dataset: label " + std::to_string(labels[i]) +
                            " out of range for " + std::to_string(num_classes) + " classes");
    for (float v : inputs[i].data)
      if (!(v >= 0.0f && v <= 1.0f))
        throw ValidationError("dataset: value outside [0,1] in example " + std::to_string(i));
  }
}

namespace {

std::uint32_t read_be32(std::ifstream& f, const std::string& path) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  if (!f) throw ParseError("truncated IDX file: " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v)};
  f.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream imf(images_path, std::ios::binary);
  if (!imf) throw ParseError("cannot open " + images_path);
  std::ifstream lbf(labels_path, std::ios::binary);
  if (!lbf) throw ParseError("cannot open " + labels_path);

  const std::uint32_t im_magic = read_be32(imf, images_path);
  if (im_magic != 0x00000803u)
    throw ParseError("wrong magic in image file " + images_path + " (got " +
                     std::to_string(im_magic) + ", want 2051)");
  const std::uint32_t lb_magic = read_be32(lbf, labels_path);
  if (lb_magic != 0x00000801u)
    throw ParseError("wrong magic in label file " + labels_path + " (got " +
                     std::to_string(lb_magic) + ", want 2049)");

  const std::uint32_t n_images = read_be32(imf, images_path);
  const std::uint32_t rows = read_be32(imf, images_path);
  const std::uint32_t cols = read_be32(imf, images_path);
  const std::uint32_t n_labels = read_be32(lbf, labels_path);
  if (n_images != n_labels)
    throw ParseError("count mismatch: " + std::to_string(n_images) + " images vs " +
                     std::to_string(n_labels) + " labels");

  Dataset ds;
  ds.name = images_path;
  ds.num_classes = 10;
  ds.inputs.reserve(n_images);
  ds.labels.reserve(n_images);

  std::vector<unsigned char> buf(std::size_t(rows) * cols);
  for (std::uint32_t i = 0; i < n_images; ++i) {
    imf.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
    if (!imf) throw ParseError("truncated IDX file: " + images_path);
    Tensor<float> t({1, rows, cols});
    for (std::size_t p = 0; p < buf.size(); ++p)
      t.data[p] = static_cast<float>(buf[p]) * (1.0f / 255.0f);
    ds.inputs.push_back(std::move(t));
  }
  for (std::uint32_t i = 0; i < n_labels; ++i) {
    unsigned char y;
    lbf.read(reinterpret_cast<char*>(&y), 1);
    if (!lbf) throw ParseError("truncated IDX file: " + labels_path);
    if (y > 9) throw ParseError("label byte " + std::to_string(int(y)) + " out of range");
    ds.labels.push_back(int(y));
  }
  return ds;
}

void save_idx(const Dataset& ds, const std::string& images_path,
              const std::string& labels_path) {
  const Shape& s = ds.input_shape();
  if (s.size() != 3 || s[0] != 1)
    throw ValidationError("save_idx: expected 1xHxW examples, got " + shape_str(s));
  std::ofstream imf(images_path, std::ios::binary);
  std::ofstream lbf(labels_path, std::ios::binary);
  write_be32(imf, 0x00000803u);
  write_be32(imf, std::uint32_t(ds.size()));
  write_be32(imf, std::uint32_t(s[1]));
  write_be32(imf, std::uint32_t(s[2]));
  write_be32(lbf, 0x00000801u);
  write_be32(lbf, std::uint32_t(ds.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (float v : ds.inputs[i].data) {
      auto b = static_cast<unsigned char>(std::lround(v * 255.0f));
      imf.write(reinterpret_cast<char*>(&b), 1);
    }
    auto y = static_cast<unsigned char>(ds.labels[i]);
    lbf.write(reinterpret_cast<char*>(&y), 1);
  }
}

Dataset synthetic_blobs(std::size_t n_per_class,
                        const std::vector<std::pair<double, double>>& centers,
                        double spread, std::uint64_t seed) {
  for (auto [cx, cy] : centers)
    if (cx < 0.2 || cx > 0.8 || cy < 0.2 || cy > 0.8)
      throw ValidationError("synthetic_blobs: centers must lie in [0.2, 0.8]^2");
  if (spread < 0) throw ValidationError("synthetic_blobs: spread must be >= 0");

  Dataset ds;
  ds.name = "blobs";
  ds.num_classes = int(centers.size());
  Rng rng(derive_seed(seed, "blobs"));
  for (std::size_t c = 0; c < centers.size(); ++c) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      double x = centers[c].first + spread * rng.gaussian();
      double y = centers[c].second + spread * rng.gaussian();
      x = std::clamp(x, 0.0, 1.0);
      y = std::clamp(y, 0.0, 1.0);
      ds.inputs.push_back(Tensor<float>({2}, {float(x), float(y)}));
      ds.labels.push_back(int(c));
    }
  }
  return ds;
}

Dataset subset(const Dataset& ds, std::size_t n, std::uint64_t seed) {
  if (n > ds.size())
    throw ValidationError("subset: n=" + std::to_string(n) + " > dataset size " +
                          std::to_string(ds.size()));
  Rng rng(derive_seed(seed, "subset"));

  std::vector<std::size_t> chosen;
  const std::size_t k = std::size_t(ds.num_classes);
  bool stratify = k > 0 && n % k == 0;
  if (stratify) {
    std::vector<std::vector<std::size_t>> by_class(k);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[std::size_t(ds.labels[i])].push_back(i);
    const std::size_t per = n / k;
    for (auto& idxs : by_class)
      if (idxs.size() < per) stratify = false;
    if (stratify) {
      for (auto& idxs : by_class) {
        // Fisher-Yates with our own stream for portability
        for (std::size_t i = idxs.size(); i > 1; --i)
          std::swap(idxs[i - 1], idxs[rng.below(i)]);
        chosen.insert(chosen.end(), idxs.begin(), idxs.begin() + std::ptrdiff_t(per));
      }
    }
  }
  if (!stratify) {
    chosen.resize(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) chosen[i] = i;
    for (std::size_t i = chosen.size(); i > 1; --i)
      std::swap(chosen[i - 1], chosen[rng.below(i)]);
    chosen.resize(n);
  }
  // final deterministic permutation so class order does not leak into batches
  for (std::size_t i = chosen.size(); i > 1; --i)
    std::swap(chosen[i - 1], chosen[rng.below(i)]);

  Dataset out;
  out.name = ds.name + "/subset" + std::to_string(n);
  out.num_classes = ds.num_classes;
  out.inputs.reserve(n);
  out.labels.reserve(n);
  for (std::size_t i : chosen) {
    out.inputs.push_back(ds.inputs[i]);
    out.labels.push_back(ds.labels[i]);
  }
  return out;
}

}  // namespace balltrain
