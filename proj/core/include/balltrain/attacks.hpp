#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <vector>

#include "balltrain/models.hpp"
#include "balltrain/rng.hpp"

namespace balltrain {

struct AttackConfig {
  double epsilon = 8.0 / 255.0;  // on [0,1] pixel scale
  double step_eta = 2.0 / 255.0;
  std::size_t iterations = 20;
  bool random_start = true;
  std::uint64_t rs_seed = 0;

  void validate() const {
    if (epsilon < 0) throw ValidationError("attack: epsilon must be >= 0");
    if (step_eta <= 0) throw ValidationError("attack: step_eta must be > 0");
    if (iterations == 0) throw ValidationError("attack: iterations must be >= 1");
    if (step_eta > epsilon && epsilon > 0)
      std::cerr << "warning: PGD step " << step_eta << " exceeds epsilon " << epsilon
                << "\n";
  }
};

// Coordinatewise clamp to [center - eps, center + eps], then to [0,1].
// Idempotent.
template <typename T>
Tensor<T> project_linf(const Tensor<T>& x, const Tensor<T>& center, double epsilon) {
  if (!x.same_shape(center))
    throw DimensionError("project_linf: shapes " + shape_str(x.shape) + " vs " +
                         shape_str(center.shape));
  Tensor<T> out = x;
  const T eps = static_cast<T>(epsilon);
  for (std::size_t i = 0; i < out.numel(); ++i) {
    T lo = center.data[i] - eps, hi = center.data[i] + eps;
    T v = out.data[i];
    v = v < lo ? lo : (v > hi ? hi : v);
    v = v < T(0) ? T(0) : (v > T(1) ? T(1) : v);
    out.data[i] = v;
  }
  return out;
}

// Gradient of the summed batch loss w.r.t. the inputs; sum reduction gives
// exact per-example input gradients. Parameters are frozen.
template <typename T>
Tensor<T> input_gradient(const ModelParams<T>& m, const Tensor<T>& batch,
                         const std::vector<int>& labels, double* loss_out = nullptr) {
  Tape<T> tape;
  auto pv = leaf_params(tape, m, false);
  auto b = tape.leaf(batch, true);
  auto logits = forward(tape, pv, m.arch, b);
  auto loss = tape.softmax_cross_entropy(logits, labels, Reduction::Sum);
  if (loss_out) *loss_out = double(tape.value(loss).data[0]);
  tape.backward(loss);
  Tensor<T> g = tape.grad(b);
  if (!g.all_finite()) throw AttackError("non-finite input gradient");
  return g;
}

namespace detail {
template <typename T>
T sign0(T v) {
  return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));  // sign(0) = 0
}
}  // namespace detail

// Single-step sign attack on a [B x input...] batch.
template <typename T>
Tensor<T> fgsm(const ModelParams<T>& m, const Tensor<T>& batch,
               const std::vector<int>& labels, double epsilon) {
  Tensor<T> g = input_gradient(m, batch, labels);
  Tensor<T> out = batch;
  const T eps = static_cast<T>(epsilon);
  for (std::size_t i = 0; i < out.numel(); ++i) {
    T v = out.data[i] + eps * detail::sign0(g.data[i]);
    out.data[i] = v < T(0) ? T(0) : (v > T(1) ? T(1) : v);
  }
  return out;
}

// PGD^n on a [B x input...] batch. `example_offset` indexes the examples
// globally so random-start draws do not depend on how the caller batches.
template <typename T>
Tensor<T> pgd(const ModelParams<T>& m, const Tensor<T>& batch,
              const std::vector<int>& labels, const AttackConfig& cfg,
              std::size_t example_offset = 0) {
  cfg.validate();
  const std::size_t B = batch.shape[0];
  const std::size_t n = batch.numel() / B;
  Tensor<T> x = batch;
  if (cfg.random_start && cfg.epsilon > 0) {
    for (std::size_t i = 0; i < B; ++i) {
      Rng rng(derive_seed(cfg.rs_seed, "pgd_rs", example_offset + i));
      for (std::size_t c = 0; c < n; ++c)
        x.data[i * n + c] += static_cast<T>(rng.uniform(-cfg.epsilon, cfg.epsilon));
    }
    x = project_linf(x, batch, cfg.epsilon);
  }
  const T eta = static_cast<T>(cfg.step_eta);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    Tensor<T> g;
    try {
      g = input_gradient(m, x, labels);
    } catch (const AttackError&) {
      throw AttackError("non-finite gradient at PGD iteration " + std::to_string(it));
    }
    for (std::size_t i = 0; i < x.numel(); ++i)
      x.data[i] += eta * detail::sign0(g.data[i]);
    x = project_linf(x, batch, cfg.epsilon);
  }
  return x;
}

// Single-example wrappers.
template <typename T>
Tensor<T> fgsm_one(const ModelParams<T>& m, const Tensor<T>& x, int y, double epsilon) {
  Tensor<T> b = make_batch<T>({x.template cast<float>()});
  Tensor<T> adv = fgsm(m, b, {y}, epsilon);
  return Tensor<T>(x.shape, std::move(adv.data));
}

template <typename T>
Tensor<T> pgd_one(const ModelParams<T>& m, const Tensor<T>& x, int y,
                  const AttackConfig& cfg, std::size_t example_index = 0) {
  Tensor<T> b = make_batch<T>({x.template cast<float>()});
  Tensor<T> adv = pgd(m, b, {y}, cfg, example_index);
  return Tensor<T>(x.shape, std::move(adv.data));
}

// ---- adversarial example dumps ----
// Same flat layout as perturbation-set files, tagged with the hash of the
// source model checkpoint so black-box transfer runs are replayable.

inline void save_adv_dump(const std::string& path, const std::vector<Tensor<float>>& examples,
                          const std::string& source_hash) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open " + path + " for writing");
  f.write("BTADVS01", 8);
  char hash[16] = {};
  std::memcpy(hash, source_hash.data(), std::min<std::size_t>(16, source_hash.size()));
  f.write(hash, 16);
  std::uint64_t count = examples.size();
  f.write(reinterpret_cast<const char*>(&count), 8);
  Shape shape = examples.empty() ? Shape{} : examples[0].shape;
  std::uint64_t ndim = shape.size();
  f.write(reinterpret_cast<const char*>(&ndim), 8);
  for (std::uint64_t d : std::vector<std::uint64_t>(shape.begin(), shape.end()))
    f.write(reinterpret_cast<const char*>(&d), 8);
  for (const auto& t : examples)
    f.write(reinterpret_cast<const char*>(t.data.data()),
            std::streamsize(t.data.size() * sizeof(float)));
}

inline std::vector<Tensor<float>> load_adv_dump(const std::string& path,
                                                std::string* source_hash = nullptr) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, "BTADVS01", 8) != 0)
    throw ParseError("wrong magic in adversarial dump " + path);
  char hash[16];
  f.read(hash, 16);
  if (source_hash) *source_hash = std::string(hash, 16);
  std::uint64_t count = 0, ndim = 0;
  f.read(reinterpret_cast<char*>(&count), 8);
  f.read(reinterpret_cast<char*>(&ndim), 8);
  Shape shape(ndim);
  for (auto& d : shape) {
    std::uint64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    d = v;
  }
  if (!f) throw ParseError("truncated adversarial dump " + path);
  std::vector<Tensor<float>> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Tensor<float> t(shape);
    f.read(reinterpret_cast<char*>(t.data.data()),
           std::streamsize(t.data.size() * sizeof(float)));
    if (!f) throw ParseError("truncated adversarial dump " + path);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace balltrain
