#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "balltrain/dataset.hpp"
#include "balltrain/train.hpp"

using namespace balltrain;

namespace {

Dataset blob_dataset(std::size_t n_per_class = 40, std::uint64_t seed = 3) {
  return synthetic_blobs(n_per_class, {{0.3, 0.3}, {0.7, 0.7}}, 0.05, seed);
}

double accuracy_pct(const ModelParams<float>& m, const Dataset& ds) {
  auto preds = predict(m, make_batch<float>(ds.inputs));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (preds[i] == ds.labels[i]) ++correct;
  return 100.0 * double(correct) / double(ds.size());
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.validate();
  cfg.learning_rate = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.learning_rate = 0.1;
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.epochs = 1;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.batch_size = 8;
  cfg.lr_decay = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("sgd step without momentum: w -= lr * g") {
  auto arch = Architecture::mlp({1, 1});
  ModelParams<float> m;
  m.arch = arch;
  m.names = {"fc0.w", "fc0.b"};
  m.params = {Tensor<float>({1, 1}, {1.0f}), Tensor<float>({1}, {0.5f})};
  auto state = OptimizerState<float>::init(m);
  TrainConfig cfg;
  cfg.optimizer = TrainConfig::Optimizer::Sgd;
  cfg.momentum = 0.0;
  std::vector<Tensor<float>> grads = {Tensor<float>({1, 1}, {2.0f}),
                                      Tensor<float>({1}, {-4.0f})};
  sgd_step(m, grads, state, cfg, 0.1);
  CHECK(m.params[0].data[0] == doctest::Approx(1.0 - 0.1 * 2.0));
  CHECK(m.params[1].data[0] == doctest::Approx(0.5 + 0.1 * 4.0));
}

TEST_CASE("sgd momentum accumulates velocity") {
  // two steps with constant gradient g: v1 = g, v2 = mu*g + g,
  // w2 = w0 - lr*(v1 + v2) = w0 - lr*g*(2 + mu)
  auto arch = Architecture::mlp({1, 1});
  ModelParams<float> m;
  m.arch = arch;
  m.names = {"fc0.w", "fc0.b"};
  m.params = {Tensor<float>({1, 1}, {1.0f}), Tensor<float>({1}, {0.0f})};
  auto state = OptimizerState<float>::init(m);
  TrainConfig cfg;
  cfg.optimizer = TrainConfig::Optimizer::Sgd;
  cfg.momentum = 0.9;
  std::vector<Tensor<float>> grads = {Tensor<float>({1, 1}, {1.0f}),
                                      Tensor<float>({1}, {0.0f})};
  sgd_step(m, grads, state, cfg, 0.1);
  sgd_step(m, grads, state, cfg, 0.1);
  CHECK(m.params[0].data[0] == doctest::Approx(1.0 - 0.1 * (2.0 + 0.9)));
  CHECK(state.t == 2);
}

TEST_CASE("adam first step moves by ~lr regardless of gradient scale") {
  // bias-corrected first step: delta = lr * g/|g| / (1 + eps/|g|) ~ lr*sign(g)
  for (double g0 : {1e-4, 1.0, 1e4}) {
    ModelParams<float> m;
    m.arch = Architecture::mlp({1, 1});
    m.names = {"fc0.w", "fc0.b"};
    m.params = {Tensor<float>({1, 1}, {0.0f}), Tensor<float>({1}, {0.0f})};
    auto state = OptimizerState<float>::init(m);
    TrainConfig cfg;
    std::vector<Tensor<float>> grads = {Tensor<float>({1, 1}, {float(g0)}),
                                        Tensor<float>({1}, {0.0f})};
    adam_step(m, grads, state, cfg, 0.001);
    CHECK(m.params[0].data[0] == doctest::Approx(-0.001).epsilon(1e-3));
    // zero gradient coordinate stays put
    CHECK(m.params[1].data[0] == 0.0f);
  }
}

TEST_CASE("optimizer rejects non-finite gradients") {
  ModelParams<float> m;
  m.arch = Architecture::mlp({1, 1});
  m.names = {"fc0.w", "fc0.b"};
  m.params = {Tensor<float>({1, 1}, {0.0f}), Tensor<float>({1}, {0.0f})};
  auto state = OptimizerState<float>::init(m);
  TrainConfig cfg;
  std::vector<Tensor<float>> grads = {
      Tensor<float>({1, 1}, {std::numeric_limits<float>::quiet_NaN()}),
      Tensor<float>({1}, {0.0f})};
  CHECK_THROWS_AS(adam_step(m, grads, state, cfg, 0.001), NumericError);
  CHECK_THROWS_AS(sgd_step(m, grads, state, cfg, 0.001), NumericError);
}

TEST_CASE("training separates the blobs and loss decreases") {
  Dataset ds = blob_dataset();
  auto arch = Architecture::mlp({2, 16, 2});
  auto model = init_model<float>(arch, 5);
  TrainConfig cfg;
  cfg.optimizer = TrainConfig::Optimizer::Adam;
  cfg.learning_rate = 0.01;
  cfg.epochs = 30;
  cfg.batch_size = 16;
  cfg.shuffle_seed = 7;
  TrainOptions opts;  // clean training
  const double acc_before = accuracy_pct(model, ds);
  TrainReport rep = train_run(model, ds, opts, cfg);
  REQUIRE(rep.epochs.size() == 30);
  CHECK(rep.epochs.back().loss < rep.epochs.front().loss);
  CHECK(rep.epochs.back().loss < 0.1);
  CHECK(rep.epochs.back().accuracy == 100.0);
  CHECK(accuracy_pct(model, ds) == 100.0);
  CHECK(accuracy_pct(model, ds) >= acc_before);
}

TEST_CASE("training is bit-identical across reruns") {
  Dataset ds = blob_dataset();
  auto arch = Architecture::mlp({2, 8, 2});
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.shuffle_seed = 2;
  TrainOptions opts;

  auto m1 = init_model<float>(arch, 9);
  auto m2 = init_model<float>(arch, 9);
  auto r1 = train_run(m1, ds, opts, cfg);
  auto r2 = train_run(m2, ds, opts, cfg);
  for (std::size_t p = 0; p < m1.params.size(); ++p)
    CHECK(m1.params[p].data == m2.params[p].data);
  for (std::size_t e = 0; e < r1.epochs.size(); ++e) {
    CHECK(r1.epochs[e].loss == r2.epochs[e].loss);
    CHECK(r1.epochs[e].accuracy == r2.epochs[e].accuracy);
  }

  // a different shuffle seed changes the trajectory
  auto m3 = init_model<float>(arch, 9);
  TrainConfig cfg3 = cfg;
  cfg3.shuffle_seed = 3;
  train_run(m3, ds, opts, cfg3);
  CHECK(m1.params[0].data != m3.params[0].data);
}

TEST_CASE("constant K=0 training is bit-identical to clean training") {
  Dataset ds = blob_dataset();
  auto arch = Architecture::mlp({2, 8, 2});
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.shuffle_seed = 4;

  auto clean = init_model<float>(arch, 11);
  TrainOptions clean_opts;
  train_run(clean, ds, clean_opts, cfg);

  auto k0 = init_model<float>(arch, 11);
  PerturbationSet empty = sample_perturbation_set(ds, {}, 0, 1);
  TrainOptions k0_opts;
  k0_opts.mode = PerturbMode::Constant;
  k0_opts.pset = &empty;
  train_run(k0, ds, k0_opts, cfg);

  for (std::size_t p = 0; p < clean.params.size(); ++p)
    CHECK(clean.params[p].data == k0.params[p].data);
}

TEST_CASE("augmented training sees K*M extra examples per epoch") {
  Dataset ds = blob_dataset(10);  // 20 examples
  auto arch = Architecture::mlp({2, 8, 2});
  auto model = init_model<float>(arch, 1);
  DistributionSpec spec{DistributionSpec::Kind::Uniform, 0.1};
  PerturbationSet ps = sample_perturbation_set(ds, spec, 3, 2);
  AugmentedDataset aug{&ds, &ps, true};
  CHECK(aug.size() == 20 + 3 * 20);

  // one epoch over the augmented set runs without error and counts all
  // size() elements in its statistics
  auto state = OptimizerState<float>::init(model);
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.batch_size = 7;  // exercises the partial final batch: 80 = 11*7 + 3
  EpochStats st = train_epoch(model, state, aug, cfg, 0);
  CHECK(st.loss > 0);
  CHECK(st.accuracy >= 0);
  CHECK(st.accuracy <= 100);
}

TEST_CASE("variable mode resamples; constant mode does not") {
  Dataset ds = blob_dataset(10);
  auto arch = Architecture::mlp({2, 8, 2});
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  DistributionSpec spec{DistributionSpec::Kind::Uniform, 0.1};

  // constant: two epochs over the same content -> same content hash both times
  PerturbationSet ps = sample_perturbation_set(ds, spec, 1, 5);
  AugmentedDataset aug{&ds, &ps, true};
  const auto h_before = aug.content_hash();
  auto mc = init_model<float>(arch, 3);
  TrainOptions copts;
  copts.mode = PerturbMode::Constant;
  copts.pset = &ps;
  train_run(mc, ds, copts, cfg);
  CHECK(aug.content_hash() == h_before);

  // variable: per-epoch deltas differ, so the trajectory differs from constant
  auto mv = init_model<float>(arch, 3);
  TrainOptions vopts;
  vopts.mode = PerturbMode::Variable;
  vopts.spec = spec;
  vopts.variable_seed = 5;
  train_run(mv, ds, vopts, cfg);
  CHECK(mc.params[0].data != mv.params[0].data);

  // and the variable run itself is reproducible
  auto mv2 = init_model<float>(arch, 3);
  train_run(mv2, ds, vopts, cfg);
  for (std::size_t p = 0; p < mv.params.size(); ++p)
    CHECK(mv.params[p].data == mv2.params[p].data);
}

TEST_CASE("per-epoch stats csv is written") {
  Dataset ds = blob_dataset(5);
  auto arch = Architecture::mlp({2, 4, 2});
  auto model = init_model<float>(arch, 1);
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  TrainOptions opts;
  auto path = (std::filesystem::temp_directory_path() / "balltrain_tests" / "stats.csv");
  std::filesystem::create_directories(path.parent_path());
  opts.stats_csv = path.string();
  train_run(model, ds, opts, cfg);
  std::ifstream f(path);
  std::string header;
  std::getline(f, header);
  CHECK(header == "epoch,loss,accuracy,seconds");
  std::string l0, l1, extra;
  CHECK(bool(std::getline(f, l0)));
  CHECK(bool(std::getline(f, l1)));
  CHECK_FALSE(bool(std::getline(f, extra)));
  CHECK(l0.rfind("0,", 0) == 0);
  CHECK(l1.rfind("1,", 0) == 0);
}
