#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <vector>

#include "balltrain/models.hpp"
#include "balltrain/perturb.hpp"

namespace balltrain {

struct TrainConfig {
  enum class Optimizer { Sgd, Adam };
  Optimizer optimizer = Optimizer::Adam;
  double learning_rate = 1e-3;
  double momentum = 0.9;     // SGD only
  double lr_decay = 1.0;     // multiplicative per-epoch factor
  std::size_t epochs = 1;
  std::size_t batch_size = 64;
  std::uint64_t shuffle_seed = 0;

  void validate() const {
    if (learning_rate <= 0) throw ValidationError("train: learning_rate must be > 0");
    if (lr_decay <= 0 || lr_decay > 1) throw ValidationError("train: lr_decay must be in (0,1]");
    if (epochs == 0) throw ValidationError("train: epochs must be >= 1");
    if (batch_size == 0) throw ValidationError("train: batch_size must be >= 1");
  }
};

struct EpochStats {
  double loss = 0;      // mean loss over examples
  double accuracy = 0;  // train accuracy, percent
  double seconds = 0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
};

template <typename T>
struct OptimizerState {
  std::vector<Tensor<T>> m;  // SGD velocity or Adam first moment
  std::vector<Tensor<T>> v;  // Adam second moment
  std::size_t t = 0;

  static OptimizerState init(const ModelParams<T>& model) {
    OptimizerState s;
    for (const auto& p : model.params) {
      s.m.push_back(Tensor<T>(p.shape));
      s.v.push_back(Tensor<T>(p.shape));
    }
    return s;
  }
};

template <typename T>
void check_grads_finite(const std::vector<Tensor<T>>& grads) {
  for (const auto& g : grads)
    if (!g.all_finite()) throw NumericError("non-finite gradient in optimizer step");
}

template <typename T>
void sgd_step(ModelParams<T>& model, const std::vector<Tensor<T>>& grads,
              OptimizerState<T>& state, const TrainConfig& cfg, double lr) {
  check_grads_finite(grads);
  for (std::size_t p = 0; p < model.params.size(); ++p) {
    auto& w = model.params[p];
    auto& vel = state.m[p];
    for (std::size_t i = 0; i < w.numel(); ++i) {
      vel.data[i] = static_cast<T>(cfg.momentum) * vel.data[i] + grads[p].data[i];
      w.data[i] -= static_cast<T>(lr) * vel.data[i];
    }
  }
  ++state.t;
}

template <typename T>
void adam_step(ModelParams<T>& model, const std::vector<Tensor<T>>& grads,
               OptimizerState<T>& state, const TrainConfig&, double lr) {
  check_grads_finite(grads);
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++state.t;
  const double bc1 = 1.0 - std::pow(beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(beta2, double(state.t));
  for (std::size_t p = 0; p < model.params.size(); ++p) {
    auto& w = model.params[p];
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (std::size_t i = 0; i < w.numel(); ++i) {
      const double g = double(grads[p].data[i]);
      const double mi = beta1 * double(m.data[i]) + (1.0 - beta1) * g;
      const double vi = beta2 * double(v.data[i]) + (1.0 - beta2) * g * g;
      m.data[i] = static_cast<T>(mi);
      v.data[i] = static_cast<T>(vi);
      const double mhat = mi / bc1, vhat = vi / bc2;
      w.data[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

template <typename T>
void optimizer_step(ModelParams<T>& model, const std::vector<Tensor<T>>& grads,
                    OptimizerState<T>& state, const TrainConfig& cfg, double lr) {
  if (cfg.optimizer == TrainConfig::Optimizer::Sgd)
    sgd_step(model, grads, state, cfg, lr);
  else
    adam_step(model, grads, state, cfg, lr);
}

namespace detail {

// One pass over `size` virtual elements via materialize(index) -> (x, y).
// Shuffle order derives from (shuffle_seed, epoch); last partial batch kept.
template <typename T, typename Materialize>
EpochStats run_epoch(ModelParams<T>& model, OptimizerState<T>& state,
                     const TrainConfig& cfg, std::size_t epoch, std::size_t size,
                     Materialize&& materialize) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::size_t> order(size);
  for (std::size_t i = 0; i < size; ++i) order[i] = i;
  Rng shuffle_rng(derive_seed(cfg.shuffle_seed, "shuffle", epoch));
  for (std::size_t i = size; i > 1; --i)
    std::swap(order[i - 1], order[shuffle_rng.below(i)]);

  const double lr = cfg.learning_rate * std::pow(cfg.lr_decay, double(epoch));
  double loss_sum = 0;
  std::size_t correct = 0;

  for (std::size_t start = 0; start < size; start += cfg.batch_size) {
    const std::size_t bsz = std::min(cfg.batch_size, size - start);
    std::vector<Tensor<float>> xs;
    std::vector<int> ys;
    xs.reserve(bsz);
    ys.reserve(bsz);
    for (std::size_t i = 0; i < bsz; ++i) {
      auto [x, y] = materialize(order[start + i]);
      xs.push_back(std::move(x));
      ys.push_back(y);
    }
    Tape<T> tape;
    auto pv = leaf_params(tape, model, true);
    auto batch = tape.leaf(make_batch<T>(xs), false);
    auto logits = forward(tape, pv, model.arch, batch);
    auto loss = tape.softmax_cross_entropy(logits, ys, Reduction::Mean);
    const double lval = double(tape.value(loss).data[0]);
    if (!std::isfinite(lval))
      throw NumericError("training loss diverged (non-finite) at epoch " +
                         std::to_string(epoch));
    tape.backward(loss);

    const auto& lg = tape.value(logits);
    const std::size_t M = lg.shape[1];
    for (std::size_t i = 0; i < bsz; ++i) {
      const T* row = lg.data.data() + i * M;
      int best = 0;
      for (std::size_t j = 1; j < M; ++j)
        if (row[j] > row[best]) best = int(j);
      if (best == ys[i]) ++correct;
    }
    loss_sum += lval * double(bsz);

    std::vector<Tensor<T>> grads;
    grads.reserve(pv.size());
    for (auto v : pv) grads.push_back(tape.grad(v));
    optimizer_step(model, grads, state, cfg, lr);
  }

  EpochStats st;
  st.loss = loss_sum / double(size);
  st.accuracy = 100.0 * double(correct) / double(size);
  st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return st;
}

}  // namespace detail

template <typename T>
EpochStats train_epoch(ModelParams<T>& model, OptimizerState<T>& state,
                       const AugmentedDataset& aug, const TrainConfig& cfg,
                       std::size_t epoch) {
  if (aug.size() == 0) throw ValidationError("train_epoch: empty augmented set");
  return detail::run_epoch(model, state, cfg, epoch, aug.size(),
                           [&](std::size_t i) { return aug.materialize(i); });
}

enum class PerturbMode { None, Constant, Variable };

struct TrainOptions {
  PerturbMode mode = PerturbMode::None;
  const PerturbationSet* pset = nullptr;  // Constant mode
  DistributionSpec spec;                  // Variable mode
  std::uint64_t variable_seed = 0;        // Variable mode
  bool include_clean = true;
  std::string stats_csv;                  // optional per-epoch stats sink
};

// Full training run over the augmented data. Constant mode keeps
// the perturbation set fixed across epochs; Variable mode draws one fresh
// delta per example per epoch; None iterates the clean set only (and is
// bit-identical to Constant with K = 0).
template <typename T>
TrainReport train_run(ModelParams<T>& model, const Dataset& ds,
                      const TrainOptions& opts, const TrainConfig& cfg) {
  cfg.validate();
  TrainReport report;
  OptimizerState<T> state = OptimizerState<T>::init(model);
  std::ofstream csv;
  if (!opts.stats_csv.empty()) {
    csv.open(opts.stats_csv);
    csv << "epoch,loss,accuracy,seconds\n";
  }
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochStats st;
    if (opts.mode == PerturbMode::None) {
      st = detail::run_epoch(model, state, cfg, epoch, ds.size(), [&](std::size_t i) {
        return std::pair<Tensor<float>, int>(ds.inputs[i], ds.labels[i]);
      });
    } else if (opts.mode == PerturbMode::Constant) {
      if (!opts.pset) throw ValidationError("train_run: constant mode needs a PerturbationSet");
      AugmentedDataset aug{&ds, opts.pset, opts.include_clean};
      st = train_epoch(model, state, aug, cfg, epoch);
    } else {
      PerturbationSet fresh;
      fresh.spec = opts.spec;
      fresh.seed = opts.variable_seed;
      fresh.K = 1;
      fresh.num_examples = ds.size();
      fresh.deltas = resample_variable(ds, opts.spec, opts.variable_seed, epoch);
      AugmentedDataset aug{&ds, &fresh, opts.include_clean};
      st = train_epoch(model, state, aug, cfg, epoch);
    }
    if (csv.is_open())
      csv << epoch << "," << st.loss << "," << st.accuracy << "," << st.seconds << "\n";
    report.epochs.push_back(st);
  }
  return report;
}

}  // namespace balltrain
