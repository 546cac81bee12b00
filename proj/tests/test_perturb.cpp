#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "balltrain/perturb.hpp"

using namespace balltrain;

namespace {

Dataset tiny_dataset() {
  Dataset ds;
  ds.num_classes = 2;
  ds.name = "tiny";
  ds.inputs.push_back(Tensor<float>({2}, {0.5f, 0.9f}));
  ds.inputs.push_back(Tensor<float>({2}, {0.1f, 0.5f}));
  ds.labels = {0, 1};
  return ds;
}

std::string tmp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "balltrain_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST_CASE("uniform distribution moments and bounds") {
  // U(-b, b): mean 0, variance b^2/3, E|x| = b/2. With n = 1e6 draws the
  // standard error of the mean is b/(sqrt(3) * 1000) ~ 1.7e-4, so a 6-sigma
  // band of ~1.1e-3 is a safe deterministic tolerance.
  DistributionSpec spec{DistributionSpec::Kind::Uniform, 0.3};
  Rng rng(11);
  const std::size_t n = 1000000;
  double sum = 0, sumsq = 0, sumabs = 0, maxabs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = spec.sample(rng);
    CHECK(std::abs(v) <= 0.3);
    sum += v;
    sumsq += v * v;
    sumabs += std::abs(v);
    maxabs = std::max(maxabs, std::abs(v));
  }
  CHECK(std::abs(sum / n) < 1.1e-3);
  CHECK(sumsq / n == doctest::Approx(0.09 / 3.0).epsilon(0.01));
  CHECK(sumabs / n == doctest::Approx(0.15).epsilon(0.01));
  CHECK(maxabs > 0.299);  // the support edge is actually reached
}

TEST_CASE("gaussian distribution moments") {
  // N(0, sigma^2) with sigma = 0.3: variance 0.09, E|x| = sigma*sqrt(2/pi).
  DistributionSpec spec{DistributionSpec::Kind::Gaussian, 0.3};
  Rng rng(12);
  const std::size_t n = 1000000;
  double sum = 0, sumsq = 0, sumabs = 0, maxabs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = spec.sample(rng);
    sum += v;
    sumsq += v * v;
    sumabs += std::abs(v);
    maxabs = std::max(maxabs, std::abs(v));
  }
  CHECK(std::abs(sum / n) < 2e-3);
  CHECK(sumsq / n == doctest::Approx(0.09).epsilon(0.01));
  CHECK(sumabs / n == doctest::Approx(0.3 * std::sqrt(2.0 / M_PI)).epsilon(0.01));
  CHECK(maxabs > 0.9);  // gaussians exceed the uniform bound
}

TEST_CASE("perturbation set shape, bounds, determinism") {
  Dataset ds = tiny_dataset();
  DistributionSpec spec{DistributionSpec::Kind::Uniform, 0.25};
  PerturbationSet ps = sample_perturbation_set(ds, spec, 3, 77);
  CHECK(ps.K == 3);
  CHECK(ps.num_examples == 2);
  CHECK(ps.deltas.size() == 6);
  for (const auto& d : ps.deltas) {
    CHECK(d.shape == ds.input_shape());
    for (float v : d.data) CHECK(std::abs(v) <= 0.25f);
  }
  PerturbationSet ps2 = sample_perturbation_set(ds, spec, 3, 77);
  for (std::size_t i = 0; i < ps.deltas.size(); ++i)
    CHECK(ps.deltas[i].data == ps2.deltas[i].data);
  PerturbationSet ps3 = sample_perturbation_set(ds, spec, 3, 78);
  CHECK(ps.deltas[0].data != ps3.deltas[0].data);
}

TEST_CASE("K=0 perturbation set is empty") {
  Dataset ds = tiny_dataset();
  PerturbationSet ps = sample_perturbation_set(ds, {}, 0, 1);
  CHECK(ps.deltas.empty());
  AugmentedDataset aug{&ds, &ps, true};
  CHECK(aug.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto [x, y] = aug.materialize(i);
    CHECK(x.data == ds.inputs[i].data);
    CHECK(y == ds.labels[i]);
  }
}

TEST_CASE("augmented dataset layout, labels, clipping") {
  Dataset ds = tiny_dataset();
  DistributionSpec spec{DistributionSpec::Kind::Uniform, 0.3};
  PerturbationSet ps = sample_perturbation_set(ds, spec, 2, 5);
  AugmentedDataset aug{&ds, &ps, true};
  CHECK(aug.size() == 2 + 2 * 2);

  // clean block first
  auto [c0, y0] = aug.materialize(0);
  CHECK(c0.data == ds.inputs[0].data);
  CHECK(y0 == 0);

  // perturbed element (i=1, j=0) sits at index M + i*K + j = 2 + 2 = 4
  auto [p10, yp] = aug.materialize(4);
  CHECK(yp == 1);
  for (std::size_t c = 0; c < p10.numel(); ++c) {
    const float expect =
        std::clamp(ds.inputs[1].data[c] + ps.delta(1, 0).data[c], 0.0f, 1.0f);
    CHECK(p10.data[c] == expect);
    CHECK(p10.data[c] >= 0.0f);
    CHECK(p10.data[c] <= 1.0f);
  }

  CHECK_THROWS_AS(aug.materialize(6), ValidationError);

  AugmentedDataset no_clean{&ds, &ps, false};
  CHECK(no_clean.size() == 4);
  auto [q, qy] = no_clean.materialize(0);  // now (i=0, j=0)
  CHECK(qy == 0);
  CHECK(q.data[0] ==
        std::clamp(ds.inputs[0].data[0] + ps.delta(0, 0).data[0], 0.0f, 1.0f));
}

TEST_CASE("clipping actually engages near the range edges") {
  Dataset ds;
  ds.num_classes = 2;
  ds.name = "edges";
  ds.inputs.push_back(Tensor<float>({2}, {0.0f, 1.0f}));
  ds.labels = {0};
  DistributionSpec spec{DistributionSpec::Kind::Uniform, 0.3};
  PerturbationSet ps = sample_perturbation_set(ds, spec, 50, 9);
  AugmentedDataset aug{&ds, &ps, false};
  bool clipped_low = false, clipped_high = false;
  for (std::size_t i = 0; i < aug.size(); ++i) {
    auto [x, y] = aug.materialize(i);
    if (x.data[0] == 0.0f && ps.delta(0, i).data[0] < 0) clipped_low = true;
    if (x.data[1] == 1.0f && ps.delta(0, i).data[1] > 0) clipped_high = true;
    CHECK(x.data[0] >= 0.0f);
    CHECK(x.data[1] <= 1.0f);
  }
  CHECK(clipped_low);
  CHECK(clipped_high);
  // the stored deltas themselves stay unclipped
  bool any_negative = false;
  for (const auto& d : ps.deltas) any_negative |= d.data[0] < 0.0f;
  CHECK(any_negative);
}

TEST_CASE("constant perturbations: content hash stable across reads") {
  Dataset ds = tiny_dataset();
  DistributionSpec spec{DistributionSpec::Kind::Uniform, 0.3};
  PerturbationSet ps = sample_perturbation_set(ds, spec, 4, 3);
  AugmentedDataset aug{&ds, &ps, true};
  const std::uint64_t h1 = aug.content_hash();
  // simulate several epochs of traversal; nothing mutates
  for (int epoch = 0; epoch < 3; ++epoch)
    for (std::size_t i = 0; i < aug.size(); ++i) (void)aug.materialize(i);
  CHECK(aug.content_hash() == h1);
}

TEST_CASE("variable resampling differs per epoch, repeats per (seed, epoch)") {
  Dataset ds = tiny_dataset();
  DistributionSpec spec{DistributionSpec::Kind::Uniform, 0.3};
  auto e0 = resample_variable(ds, spec, 42, 0);
  auto e1 = resample_variable(ds, spec, 42, 1);
  auto e0b = resample_variable(ds, spec, 42, 0);
  REQUIRE(e0.size() == ds.size());
  CHECK(e0[0].data != e1[0].data);
  for (std::size_t i = 0; i < e0.size(); ++i) CHECK(e0[i].data == e0b[i].data);
}

TEST_CASE("ball loss: constant loss gives exact mean and zero error") {
  Tensor<float> x({2}, {0.5f, 0.5f});
  auto constant = [](const Tensor<float>&, int) { return 2.5; };
  auto [mean, se] = ball_loss_estimate(constant, x, 0, {}, 64, 1);
  CHECK(mean == 2.5);
  CHECK(se == 0.0);

  auto [m1, se1] = ball_loss_estimate(constant, x, 0, {}, 1, 1);
  CHECK(m1 == 2.5);
  CHECK(se1 == 0.0);  // n = 1 reports zero error by definition

  CHECK_THROWS_AS(ball_loss_estimate(constant, x, 0, {}, 0, 1), ValidationError);
}

TEST_CASE("ball loss: linear loss mean matches the clean loss") {
  // For f(x) = a.x with symmetric zero-mean perturbations,
  // E[f(x + delta)] = f(x). Use many samples and check the standard error
  // covers the gap.
  Tensor<float> x({2}, {0.4f, 0.6f});
  auto linear = [](const Tensor<float>& p, int) {
    return 2.0 * p.data[0] - 3.0 * p.data[1];
  };
  DistributionSpec spec{DistributionSpec::Kind::Uniform, 0.3};
  auto [mean, se] = ball_loss_estimate(linear, x, 0, spec, 20000, 7);
  const double clean = 2.0 * 0.4 - 3.0 * 0.6;
  CHECK(se > 0.0);
  CHECK(std::abs(mean - clean) < 6.0 * se);
}

TEST_CASE("ball loss: 1-d quadratic against the closed form") {
  // f(x) = (x - c)^2, delta ~ U(-b, b):
  // E[f(x + delta)] = (x - c)^2 + b^2/3.
  const double c = 0.2, b = 0.3, x0 = 0.55;
  Tensor<float> x({1}, {float(x0)});
  auto quad = [&](const Tensor<float>& p, int) {
    const double d = double(p.data[0]) - c;
    return d * d;
  };
  DistributionSpec spec{DistributionSpec::Kind::Uniform, b};
  auto [mean, se] = ball_loss_estimate(quad, x, 0, spec, 200000, 3);
  const double expect = (x0 - c) * (x0 - c) + b * b / 3.0;
  CHECK(mean == doctest::Approx(expect).epsilon(0.01));
  CHECK(std::abs(mean - expect) < 6.0 * se);
}

TEST_CASE("ball loss determinism") {
  Tensor<float> x({2}, {0.5f, 0.5f});
  auto f = [](const Tensor<float>& p, int) { return double(p.data[0] + p.data[1]); };
  DistributionSpec spec{DistributionSpec::Kind::Uniform, 0.3};
  auto r1 = ball_loss_estimate(f, x, 0, spec, 100, 5);
  auto r2 = ball_loss_estimate(f, x, 0, spec, 100, 5);
  auto r3 = ball_loss_estimate(f, x, 0, spec, 100, 6);
  CHECK(r1 == r2);
  CHECK(r1 != r3);
}

TEST_CASE("perturbation set file round-trip") {
  Dataset ds = tiny_dataset();
  DistributionSpec spec{DistributionSpec::Kind::Gaussian, 0.17};
  PerturbationSet ps = sample_perturbation_set(ds, spec, 3, 123);
  const auto path = tmp_path("pset.bin");
  save_perturbation_set(ps, path);
  PerturbationSet lo = load_perturbation_set(path);
  CHECK(lo.seed == 123);
  CHECK(lo.K == 3);
  CHECK(lo.num_examples == 2);
  CHECK(lo.spec.kind == DistributionSpec::Kind::Gaussian);
  CHECK(lo.spec.param == 0.17);
  REQUIRE(lo.deltas.size() == ps.deltas.size());
  for (std::size_t i = 0; i < ps.deltas.size(); ++i) {
    CHECK(lo.deltas[i].shape == ps.deltas[i].shape);
    CHECK(lo.deltas[i].data == ps.deltas[i].data);
  }
}

TEST_CASE("perturbation set loader rejects a corrupt file") {
  const auto path = tmp_path("pset_bad.bin");
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOTAPSET........";
  }
  CHECK_THROWS_AS(load_perturbation_set(path), ParseError);
  CHECK_THROWS_AS(load_perturbation_set(tmp_path("missing_pset.bin")), ParseError);
}
