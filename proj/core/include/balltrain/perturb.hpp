#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "balltrain/dataset.hpp"
#include "balltrain/hash.hpp"
#include "balltrain/rng.hpp"
#include "balltrain/tensor.hpp"

namespace balltrain {

// Per-coordinate perturbation distribution. Uniform samples lie in
// [-bound, bound] exactly; Gaussian samples are unbounded (only the [0,1]
// input clip applies, at materialization).
struct DistributionSpec {
  enum class Kind { Uniform, Gaussian };
  Kind kind = Kind::Uniform;
  double param = 0.3;  // bound b for Uniform, sigma for Gaussian

  double sample(Rng& rng) const {
    return kind == Kind::Uniform ? rng.uniform(-param, param)
                                 : param * rng.gaussian();
  }

  std::string str() const {
    return (kind == Kind::Uniform ? "uniform:" : "gauss:") + std::to_string(param);
  }
};

// The fixed delta samples: K per training example, drawn once and never
// mutated afterwards.
struct PerturbationSet {
  std::vector<Tensor<float>> deltas;  // index i*K + j
  DistributionSpec spec;
  std::uint64_t seed = 0;
  std::size_t K = 0;
  std::size_t num_examples = 0;

  const Tensor<float>& delta(std::size_t i, std::size_t j) const {
    return deltas[i * K + j];
  }
};

inline PerturbationSet sample_perturbation_set(const Dataset& ds,
                                               const DistributionSpec& spec,
                                               std::size_t K, std::uint64_t seed) {
  PerturbationSet ps;
  ps.spec = spec;
  ps.seed = seed;
  ps.K = K;
  ps.num_examples = ds.size();
  if (K == 0) return ps;
  const Shape& shape = ds.input_shape();
  Rng rng(derive_seed(seed, "pset"));
  ps.deltas.reserve(ds.size() * K);
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t j = 0; j < K; ++j) {
      Tensor<float> d(shape);
      for (auto& v : d.data) v = static_cast<float>(spec.sample(rng));
      ps.deltas.push_back(std::move(d));
    }
  return ps;
}

// One fresh delta per example, derived from (base seed, epoch index).
inline std::vector<Tensor<float>> resample_variable(const Dataset& ds,
                                                    const DistributionSpec& spec,
                                                    std::uint64_t base_seed,
                                                    std::uint64_t epoch) {
  Rng rng(derive_seed(base_seed, "variable", epoch));
  std::vector<Tensor<float>> out;
  out.reserve(ds.size());
  const Shape& shape = ds.input_shape();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    Tensor<float> d(shape);
    for (auto& v : d.data) v = static_cast<float>(spec.sample(rng));
    out.push_back(std::move(d));
  }
  return out;
}

// View of base + perturbation set as one flat training set.
// Index layout: [0, M) are the clean examples (when include_clean),
// then element M + i*K + j is clip(x_i + delta_{i,j}, 0, 1) with label y_i.
struct AugmentedDataset {
  const Dataset* base = nullptr;
  const PerturbationSet* pset = nullptr;
  bool include_clean = true;

  std::size_t clean_count() const { return include_clean ? base->size() : 0; }
  std::size_t size() const {
    return clean_count() + (pset ? pset->K * base->size() : 0);
  }

  std::pair<Tensor<float>, int> materialize(std::size_t index) const {
    if (index >= size())
      throw ValidationError("materialize: index " + std::to_string(index) +
                            " out of range [0, " + std::to_string(size()) + ")");
    const std::size_t M = clean_count();
    if (index < M) return {base->inputs[index], base->labels[index]};
    const std::size_t p = index - M;
    const std::size_t i = p / pset->K;
    const std::size_t j = p % pset->K;
    Tensor<float> x = base->inputs[i];
    const Tensor<float>& d = pset->delta(i, j);
    for (std::size_t c = 0; c < x.numel(); ++c)
      x.data[c] = std::clamp(x.data[c] + d.data[c], 0.0f, 1.0f);
    return {std::move(x), base->labels[i]};
  }

  // Hash of every materialized element and label; constant perturbations
  // make this identical at every epoch.
  std::uint64_t content_hash() const {
    Hasher h;
    for (std::size_t i = 0; i < size(); ++i) {
      auto [x, y] = materialize(i);
      h.update(x.data.data(), x.data.size() * sizeof(float));
      h.update_value(y);
    }
    return h.digest();
  }
};

// Monte Carlo estimate of the expected loss over the ball around x.
// loss_fn(x_perturbed, y) -> loss at that point; fresh deltas each draw.
// Returns (mean, standard error); the std error uses the sample std (n-1)
// and is 0 for n == 1.
template <typename LossFn>
std::pair<double, double> ball_loss_estimate(LossFn&& loss_fn, const Tensor<float>& x,
                                             int y, const DistributionSpec& spec,
                                             std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw ValidationError("ball_loss_estimate: n_samples must be >= 1");
  Rng rng(derive_seed(seed, "ball_loss"));
  double sum = 0.0, sumsq = 0.0;
  Tensor<float> xp = x;
  for (std::size_t s = 0; s < n_samples; ++s) {
    for (std::size_t c = 0; c < x.numel(); ++c)
      xp.data[c] = x.data[c] + static_cast<float>(spec.sample(rng));
    const double l = loss_fn(xp, y);
    sum += l;
    sumsq += l * l;
  }
  const double n = static_cast<double>(n_samples);
  const double mean = sum / n;
  double se = 0.0;
  if (n_samples > 1) {
    double var = (sumsq - n * mean * mean) / (n - 1.0);
    se = std::sqrt(std::max(0.0, var) / n);
  }
  return {mean, se};
}

// Flat binary export/import for exact experiment replay.
void save_perturbation_set(const PerturbationSet& ps, const std::string& path);
PerturbationSet load_perturbation_set(const std::string& path);

}  // namespace balltrain
