#include <cstring>
#include <fstream>

#include "balltrain/perturb.hpp"

namespace balltrain {

// Layout (all little-endian):
//   8 bytes magic "BTPSET01"
//   u64 seed, u64 K, u64 kind, f64 param, u64 num_examples,
//   u64 ndim, u64 dims[ndim]
//   f32 deltas, example-major then perturbation-major then row-major coords

namespace {
constexpr char kMagic[8] = {'B', 'T', 'P', 'S', 'E', 'T', '0', '1'};

template <typename T>
void put(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
template <typename T>
T get(std::ifstream& f, const std::string& path) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!f) throw ParseError("truncated perturbation file: " + path);
  return v;
}
}  // namespace

void save_perturbation_set(const PerturbationSet& ps, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open " + path + " for writing");
  f.write(kMagic, 8);
  put<std::uint64_t>(f, ps.seed);
  put<std::uint64_t>(f, ps.K);
  put<std::uint64_t>(f, ps.spec.kind == DistributionSpec::Kind::Uniform ? 0 : 1);
  put<double>(f, ps.spec.param);
  put<std::uint64_t>(f, ps.num_examples);
  Shape shape = ps.deltas.empty() ? Shape{} : ps.deltas[0].shape;
  put<std::uint64_t>(f, shape.size());
  for (auto d : shape) put<std::uint64_t>(f, d);
  for (const auto& t : ps.deltas)
    f.write(reinterpret_cast<const char*>(t.data.data()),
            std::streamsize(t.data.size() * sizeof(float)));
}

PerturbationSet load_perturbation_set(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw ParseError("wrong magic in perturbation file " + path);
  PerturbationSet ps;
  ps.seed = get<std::uint64_t>(f, path);
  ps.K = get<std::uint64_t>(f, path);
  ps.spec.kind = get<std::uint64_t>(f, path) == 0 ? DistributionSpec::Kind::Uniform
                                                  : DistributionSpec::Kind::Gaussian;
  ps.spec.param = get<double>(f, path);
  ps.num_examples = get<std::uint64_t>(f, path);
  const auto ndim = get<std::uint64_t>(f, path);
  Shape shape(ndim);
  for (auto& d : shape) d = get<std::uint64_t>(f, path);
  const std::size_t count = ps.num_examples * ps.K;
  ps.deltas.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Tensor<float> t(shape);
    f.read(reinterpret_cast<char*>(t.data.data()),
           std::streamsize(t.data.size() * sizeof(float)));
    if (!f) throw ParseError("truncated perturbation file: " + path);
    ps.deltas.push_back(std::move(t));
  }
  return ps;
}

}  // namespace balltrain
