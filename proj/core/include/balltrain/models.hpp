#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "balltrain/autodiff.hpp"
#include "balltrain/hash.hpp"
#include "balltrain/rng.hpp"
#include "balltrain/tensor.hpp"

namespace balltrain {

// Architecture descriptor. Serializes to a short string ("mlp:2,16,2",
// "lenet:1,28,28,10") used in checkpoint headers and config files.
struct Architecture {
  enum class Kind { Mlp, LeNet };
  Kind kind = Kind::Mlp;
  std::vector<std::size_t> mlp_sizes;  // input..output, >= 2 entries
  std::size_t in_channels = 1, in_h = 28, in_w = 28;
  std::size_t lenet_classes = 10;

  static Architecture mlp(std::vector<std::size_t> sizes) {
    if (sizes.size() < 2) throw ValidationError("mlp: need at least input and output sizes");
    Architecture a;
    a.kind = Kind::Mlp;
    a.mlp_sizes = std::move(sizes);
    return a;
  }

  // Two 5x5 conv layers (32 then 64 channels), each relu + 2x2 maxpool,
  // then fc 1024 hidden + relu, then the class layer.
  static Architecture lenet(std::size_t channels, std::size_t h, std::size_t w,
                            std::size_t classes) {
    if (h < 16 || w < 16 || h % 4 != 0 || w % 4 != 0)
      throw ValidationError("lenet: input H and W must be multiples of 4 and >= 16");
    Architecture a;
    a.kind = Kind::LeNet;
    a.in_channels = channels;
    a.in_h = h;
    a.in_w = w;
    a.lenet_classes = classes;
    return a;
  }

  std::size_t num_classes() const {
    return kind == Kind::Mlp ? mlp_sizes.back() : lenet_classes;
  }

  Shape input_shape() const {
    return kind == Kind::Mlp ? Shape{mlp_sizes.front()}
                             : Shape{in_channels, in_h, in_w};
  }

  // flattened feature size after the conv stack
  std::size_t lenet_flat() const {
    const std::size_t h = (in_h - 4) / 2, w = (in_w - 4) / 2;
    return 64 * ((h - 4) / 2) * ((w - 4) / 2);
  }

  std::string str() const {
    std::ostringstream os;
    if (kind == Kind::Mlp) {
      os << "mlp:";
      for (std::size_t i = 0; i < mlp_sizes.size(); ++i) os << (i ? "," : "") << mlp_sizes[i];
    } else {
      os << "lenet:" << in_channels << "," << in_h << "," << in_w << "," << lenet_classes;
    }
    return os.str();
  }

  static Architecture parse(const std::string& s) {
    auto colon = s.find(':');
    if (colon == std::string::npos) throw ParseError("bad architecture string: " + s);
    const std::string head = s.substr(0, colon);
    std::vector<std::size_t> nums;
    std::stringstream ss(s.substr(colon + 1));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        nums.push_back(std::stoull(tok));
      } catch (...) {
        throw ParseError("bad architecture number '" + tok + "' in " + s);
      }
    }
    if (head == "mlp") return mlp(std::move(nums));
    if (head == "lenet") {
      if (nums.size() != 4) throw ParseError("lenet takes channels,h,w,classes: " + s);
      return lenet(nums[0], nums[1], nums[2], nums[3]);
    }
    throw ParseError("unknown architecture kind: " + head);
  }

  bool operator==(const Architecture& o) const { return str() == o.str(); }
};

// Named parameter tensors in a fixed registration order.
template <typename T>
struct ModelParams {
  Architecture arch;
  std::vector<std::string> names;
  std::vector<Tensor<T>> params;

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.numel();
    return n;
  }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.arch = arch;
    out.names = names;
    for (const auto& p : params) out.params.push_back(p.template cast<U>());
    return out;
  }
};

namespace detail {
template <typename T>
Tensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}
}  // namespace detail

// Kaiming-uniform (fan-in) weights, zero biases; deterministic given seed.
template <typename T>
ModelParams<T> init_model(const Architecture& arch, std::uint64_t seed) {
  ModelParams<T> m;
  m.arch = arch;
  Rng rng(derive_seed(seed, "init"));
  auto reg = [&](const std::string& name, Tensor<T> t) {
    m.names.push_back(name);
    m.params.push_back(std::move(t));
  };
  if (arch.kind == Architecture::Kind::Mlp) {
    for (std::size_t l = 0; l + 1 < arch.mlp_sizes.size(); ++l) {
      const std::size_t in = arch.mlp_sizes[l], out = arch.mlp_sizes[l + 1];
      reg("fc" + std::to_string(l) + ".w", detail::kaiming_uniform<T>({out, in}, in, rng));
      reg("fc" + std::to_string(l) + ".b", Tensor<T>({out}));
    }
  } else {
    const std::size_t C = arch.in_channels;
    reg("conv1.w", detail::kaiming_uniform<T>({32, C, 5, 5}, C * 25, rng));
    reg("conv1.b", Tensor<T>({32}));
    reg("conv2.w", detail::kaiming_uniform<T>({64, 32, 5, 5}, 32 * 25, rng));
    reg("conv2.b", Tensor<T>({64}));
    const std::size_t flat = arch.lenet_flat();
    reg("fc1.w", detail::kaiming_uniform<T>({1024, flat}, flat, rng));
    reg("fc1.b", Tensor<T>({1024}));
    reg("fc2.w", detail::kaiming_uniform<T>({arch.lenet_classes, 1024}, 1024, rng));
    reg("fc2.b", Tensor<T>({arch.lenet_classes}));
  }
  return m;
}

// Builds the forward graph on an existing tape. `batch` is [B x input...];
// differentiable w.r.t. both the parameter leaves and the input leaf.
template <typename T>
typename Tape<T>::Var forward(Tape<T>& tape,
                              const std::vector<typename Tape<T>::Var>& params,
                              const Architecture& arch,
                              typename Tape<T>::Var batch) {
  using Var = typename Tape<T>::Var;
  const Shape& bs = tape.value(batch).shape;
  if (arch.kind == Architecture::Kind::Mlp) {
    if (bs.size() != 2 || bs[1] != arch.mlp_sizes.front())
      throw DimensionError("forward: batch " + shape_str(bs) + " does not match mlp input " +
                           std::to_string(arch.mlp_sizes.front()));
    Var h = batch;
    const std::size_t layers = arch.mlp_sizes.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
      h = tape.linear(h, params[2 * l], params[2 * l + 1]);
      if (l + 1 < layers) h = tape.relu(h);
    }
    return h;
  }
  if (bs.size() != 4 || bs[1] != arch.in_channels || bs[2] != arch.in_h || bs[3] != arch.in_w)
    throw DimensionError("forward: batch " + shape_str(bs) + " does not match lenet input");
  const std::size_t B = bs[0];
  Var h = tape.conv2d(batch, params[0], params[1]);
  h = tape.relu(h);
  h = tape.maxpool2d(h);
  h = tape.conv2d(h, params[2], params[3]);
  h = tape.relu(h);
  h = tape.maxpool2d(h);
  h = tape.reshape(h, {B, arch.lenet_flat()});
  h = tape.linear(h, params[4], params[5]);
  h = tape.relu(h);
  return tape.linear(h, params[6], params[7]);
}

template <typename T>
std::vector<typename Tape<T>::Var> leaf_params(Tape<T>& tape, const ModelParams<T>& m,
                                               bool needs_grad = true) {
  std::vector<typename Tape<T>::Var> vars;
  vars.reserve(m.params.size());
  for (const auto& p : m.params) vars.push_back(tape.leaf(p, needs_grad));
  return vars;
}

// Stacks examples (cast to T) into a [B x input...] batch tensor.
template <typename T>
Tensor<T> make_batch(const std::vector<Tensor<float>>& examples) {
  if (examples.empty()) throw ValidationError("make_batch: empty batch");
  Shape shape = examples[0].shape;
  Shape bshape;
  bshape.push_back(examples.size());
  bshape.insert(bshape.end(), shape.begin(), shape.end());
  Tensor<T> out(bshape);
  const std::size_t n = examples[0].numel();
  for (std::size_t i = 0; i < examples.size(); ++i)
    for (std::size_t c = 0; c < n; ++c)
      out.data[i * n + c] = static_cast<T>(examples[i].data[c]);
  return out;
}

// Non-taped convenience forward.
template <typename T>
Tensor<T> logits_of(const ModelParams<T>& m, const Tensor<T>& batch) {
  Tape<T> tape;
  auto pv = leaf_params(tape, m, false);
  auto b = tape.leaf(batch, false);
  auto out = forward(tape, pv, m.arch, b);
  return tape.value(out);
}

// Argmax per row; ties broken toward the lowest class index.
template <typename T>
std::vector<int> predict(const ModelParams<T>& m, const Tensor<T>& batch) {
  Tensor<T> logits = logits_of(m, batch);
  const std::size_t B = logits.shape[0], M = logits.shape[1];
  std::vector<int> out(B);
  for (std::size_t i = 0; i < B; ++i) {
    const T* row = logits.data.data() + i * M;
    int best = 0;
    for (std::size_t j = 1; j < M; ++j)
      if (row[j] > row[best]) best = int(j);
    out[i] = best;
  }
  return out;
}

// ---- checkpoints: text header + little-endian f32 blob ----

inline void save_checkpoint(const ModelParams<float>& m, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open " + path + " for writing");
  f << "balltrain-checkpoint v1\n"
    << "arch " << m.arch.str() << "\n"
    << "params " << m.param_count() << "\n";
  for (const auto& p : m.params)
    f.write(reinterpret_cast<const char*>(p.data.data()),
            std::streamsize(p.data.size() * sizeof(float)));
}

inline ModelParams<float> load_checkpoint(const std::string& path,
                                          const Architecture* expected = nullptr) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open " + path);
  std::string line;
  std::getline(f, line);
  if (line != "balltrain-checkpoint v1") throw ParseError("bad checkpoint header in " + path);
  std::getline(f, line);
  if (line.rfind("arch ", 0) != 0) throw ParseError("missing arch line in " + path);
  Architecture arch = Architecture::parse(line.substr(5));
  if (expected && !(arch == *expected))
    throw ParseError("checkpoint arch " + arch.str() + " does not match expected " +
                     expected->str());
  std::getline(f, line);
  if (line.rfind("params ", 0) != 0) throw ParseError("missing params line in " + path);
  const std::size_t count = std::stoull(line.substr(7));
  ModelParams<float> m = init_model<float>(arch, 0);  // shapes only; data overwritten
  if (m.param_count() != count)
    throw ParseError("checkpoint param count " + std::to_string(count) +
                     " does not match architecture " + arch.str());
  for (auto& p : m.params) {
    f.read(reinterpret_cast<char*>(p.data.data()),
           std::streamsize(p.data.size() * sizeof(float)));
    if (!f) throw ParseError("truncated checkpoint " + path);
  }
  return m;
}

inline std::string checkpoint_hash(const ModelParams<float>& m) {
  Hasher h;
  h.update_str(m.arch.str());
  for (const auto& p : m.params)
    h.update(p.data.data(), p.data.size() * sizeof(float));
  return h.hex();
}

}  // namespace balltrain
