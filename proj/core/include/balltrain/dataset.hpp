#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "balltrain/tensor.hpp"

namespace balltrain {

// Labeled examples with values in [0,1]. Immutable once built.
struct Dataset {
  std::vector<Tensor<float>> inputs;  // all with identical shape
  std::vector<int> labels;
  int num_classes = 0;
  std::string name;

  std::size_t size() const { return inputs.size(); }
  const Shape& input_shape() const { return inputs.at(0).shape; }

  void validate() const;
};

// IDX binary loader (big-endian magic + extents, raw unsigned bytes).
// Pixels are scaled by exactly 1/255 into [0,1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Writes a dataset back out as an images/labels IDX pair. Values are
// rounded to the nearest byte; round-trips bit-exactly for byte-derived data.
void save_idx(const Dataset& ds, const std::string& images_path,
              const std::string& labels_path);

// Deterministic Gaussian blobs in [0,1]^2, one class per center.
// Centers must lie in [0.2, 0.8]^2 so perturbed points can stay in range.
Dataset synthetic_blobs(std::size_t n_per_class,
                        const std::vector<std::pair<double, double>>& centers,
                        double spread, std::uint64_t seed);

// n examples without replacement, class-stratified where divisible.
Dataset subset(const Dataset& ds, std::size_t n, std::uint64_t seed);

}  // namespace balltrain
