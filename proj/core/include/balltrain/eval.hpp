#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "balltrain/attacks.hpp"
#include "balltrain/dataset.hpp"
#include "balltrain/parallel.hpp"
#include "balltrain/perturb.hpp"
#include "balltrain/train.hpp"

namespace balltrain {

enum class AttackKind { None, Fgsm, Pgd };

struct AttackSpec {
  AttackKind kind = AttackKind::None;
  AttackConfig cfg;

  std::string label() const {
    switch (kind) {
      case AttackKind::None: return "none";
      case AttackKind::Fgsm: return "fgsm";
      default: return "pgd" + std::to_string(cfg.iterations);
    }
  }
};

namespace detail {
constexpr std::size_t kEvalBatch = 100;
}

template <typename T>
double accuracy(const ModelParams<T>& m, const Dataset& ds) {
  if (ds.size() == 0) throw ValidationError("accuracy: empty dataset");
  std::vector<std::size_t> correct((ds.size() + detail::kEvalBatch - 1) / detail::kEvalBatch);
  parallel_for(correct.size(), [&](std::size_t b) {
    const std::size_t lo = b * detail::kEvalBatch;
    const std::size_t hi = std::min(ds.size(), lo + detail::kEvalBatch);
    std::vector<Tensor<float>> xs(ds.inputs.begin() + std::ptrdiff_t(lo),
                                  ds.inputs.begin() + std::ptrdiff_t(hi));
    auto preds = predict(m, make_batch<T>(xs));
    std::size_t c = 0;
    for (std::size_t i = lo; i < hi; ++i)
      if (preds[i - lo] == ds.labels[i]) ++c;
    correct[b] = c;
  });
  std::size_t total = 0;
  for (auto c : correct) total += c;
  return 100.0 * double(total) / double(ds.size());
}

// White-box adversarial examples for every element of ds, generated with
// `attacker`'s gradients. Deterministic regardless of worker count.
template <typename T>
std::vector<Tensor<float>> generate_adversarial(const ModelParams<T>& attacker,
                                                const Dataset& ds,
                                                const AttackSpec& spec) {
  std::vector<Tensor<float>> out(ds.size());
  if (spec.kind == AttackKind::None) {
    for (std::size_t i = 0; i < ds.size(); ++i) out[i] = ds.inputs[i];
    return out;
  }
  const std::size_t nb = (ds.size() + detail::kEvalBatch - 1) / detail::kEvalBatch;
  parallel_for(nb, [&](std::size_t b) {
    const std::size_t lo = b * detail::kEvalBatch;
    const std::size_t hi = std::min(ds.size(), lo + detail::kEvalBatch);
    std::vector<Tensor<float>> xs(ds.inputs.begin() + std::ptrdiff_t(lo),
                                  ds.inputs.begin() + std::ptrdiff_t(hi));
    std::vector<int> ys(ds.labels.begin() + std::ptrdiff_t(lo),
                        ds.labels.begin() + std::ptrdiff_t(hi));
    Tensor<T> batch = make_batch<T>(xs);
    Tensor<T> adv = spec.kind == AttackKind::Fgsm
                        ? fgsm(attacker, batch, ys, spec.cfg.epsilon)
                        : pgd(attacker, batch, ys, spec.cfg, lo);
    const std::size_t n = adv.numel() / (hi - lo);
    for (std::size_t i = lo; i < hi; ++i) {
      Tensor<float> t(ds.inputs[i].shape);
      for (std::size_t c = 0; c < n; ++c)
        t.data[c] = static_cast<float>(adv.data[(i - lo) * n + c]);
      out[i] = std::move(t);
    }
  });
  return out;
}

template <typename T>
double accuracy_on(const ModelParams<T>& m, const std::vector<Tensor<float>>& inputs,
                   const std::vector<int>& labels) {
  Dataset tmp;
  tmp.inputs = inputs;
  tmp.labels = labels;
  tmp.num_classes = int(m.arch.num_classes());
  return accuracy(m, tmp);
}

// White-box: the attacked model supplies the gradients.
template <typename T>
double adversarial_accuracy(const ModelParams<T>& m, const Dataset& ds,
                            const AttackSpec& spec) {
  auto adv = generate_adversarial(m, ds, spec);
  return accuracy_on(m, adv, ds.labels);
}

// For each target, attack with examples generated from every other model
// and average. Returns per-target accuracies.
template <typename T>
std::vector<double> black_box_transfer(const std::vector<ModelParams<T>>& models,
                                       const Dataset& ds, const AttackSpec& spec) {
  if (models.size() < 2)
    throw ValidationError("black_box_transfer: need at least 2 models");
  std::vector<std::vector<Tensor<float>>> per_source(models.size());
  for (std::size_t s = 0; s < models.size(); ++s)
    per_source[s] = generate_adversarial(models[s], ds, spec);
  std::vector<double> out(models.size());
  for (std::size_t t = 0; t < models.size(); ++t) {
    double sum = 0;
    for (std::size_t s = 0; s < models.size(); ++s) {
      if (s == t) continue;
      sum += accuracy_on(models[t], per_source[s], ds.labels);
    }
    out[t] = sum / double(models.size() - 1);
  }
  return out;
}

// Adversarial accuracy per epsilon; PGD step defaults to eps/4.
template <typename T>
std::vector<std::pair<double, double>> epsilon_sweep(const ModelParams<T>& m,
                                                     const Dataset& ds,
                                                     const std::vector<double>& eps_list,
                                                     const AttackConfig& base,
                                                     bool override_eta = false) {
  for (std::size_t i = 1; i < eps_list.size(); ++i)
    if (eps_list[i] < eps_list[i - 1])
      throw ValidationError("epsilon_sweep: eps list must be ascending");
  std::vector<std::pair<double, double>> curve;
  for (double eps : eps_list) {
    if (eps == 0.0) {
      curve.emplace_back(0.0, accuracy(m, ds));
      continue;
    }
    AttackSpec spec;
    spec.kind = AttackKind::Pgd;
    spec.cfg = base;
    spec.cfg.epsilon = eps;
    if (!override_eta) spec.cfg.step_eta = eps / 4.0;
    curve.emplace_back(eps, adversarial_accuracy(m, ds, spec));
  }
  return curve;
}

template <typename T>
double example_loss(const ModelParams<T>& m, const Tensor<float>& x, int y) {
  Tape<T> tape;
  auto pv = leaf_params(tape, m, false);
  auto b = tape.leaf(make_batch<T>({x}), false);
  auto logits = forward(tape, pv, m.arch, b);
  auto loss = tape.softmax_cross_entropy(logits, {y}, Reduction::Mean);
  return double(tape.value(loss).data[0]);
}

// Per example: mean over n_pert fresh draws of |loss(x+delta) - loss(x)|.
// Returns (dataset mean, sample variance) of that per-example statistic.
template <typename T>
std::pair<double, double> loss_flatness(const ModelParams<T>& m, const Dataset& ds,
                                        const DistributionSpec& spec,
                                        std::size_t n_pert, std::uint64_t seed) {
  if (n_pert < 1) throw ValidationError("loss_flatness: n_pert must be >= 1");
  std::vector<double> stats(ds.size());
  parallel_for(ds.size(), [&](std::size_t i) {
    const double base = example_loss(m, ds.inputs[i], ds.labels[i]);
    Rng rng(derive_seed(seed, "flatness", i));
    Tensor<float> xp = ds.inputs[i];
    double sum = 0;
    for (std::size_t p = 0; p < n_pert; ++p) {
      for (std::size_t c = 0; c < xp.numel(); ++c)
        xp.data[c] = ds.inputs[i].data[c] + static_cast<float>(spec.sample(rng));
      sum += std::abs(example_loss(m, xp, ds.labels[i]) - base);
    }
    stats[i] = sum / double(n_pert);
  });
  double mean = 0;
  for (double s : stats) mean += s;
  mean /= double(stats.size());
  double var = 0;
  if (stats.size() > 1) {
    for (double s : stats) var += (s - mean) * (s - mean);
    var /= double(stats.size() - 1);
  }
  return {mean, var};
}

// ---- reporting ----

struct Aggregate {
  double mean = 0;
  double stddev = 0;  // sample (n-1); 0 by convention for n == 1
  double best = 0;
  std::size_t n = 0;
};

// mean / sample std / best of per-model accuracies
Aggregate aggregate_runs(const std::vector<double>& values);

struct ReportRow {
  std::string setting;
  std::string attack;  // none | fgsm | pgd
  double epsilon = 0;
  std::size_t iterations = 0;  // 0 -> blank
  double eta = 0;              // 0 -> blank
  std::string target_model;    // model index or "aggregate"
  double accuracy_pct = -1;    // per-target rows; < 0 -> blank
  Aggregate agg;               // aggregate rows; n == 0 -> blank
  std::string seed;
  std::string config_hash;
};

struct EvalReport {
  std::vector<ReportRow> rows;
  std::map<std::string, std::string> metadata;  // written to a sidecar file
};

// Exact schema:
// setting,attack,epsilon,iterations,eta,target_model,accuracy_pct,mean_pct,std_pct,best_pct,seed,config_hash
void write_report_csv(const EvalReport& report, const std::string& path);
std::string format_pct(double v);

}  // namespace balltrain
