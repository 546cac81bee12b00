#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "balltrain/attacks.hpp"
#include "balltrain/eval.hpp"
#include "balltrain/models.hpp"
#include "balltrain/perturb.hpp"
#include "balltrain/train.hpp"

namespace balltrain {

// Fully resolved experiment description. Every field is either set in the
// config file or defaulted; the resolved form is echoed into the output
// directory and hashed into every report row.
struct ExperimentConfig {
  // dataset
  std::string dataset = "blobs";  // "blobs" | "idx"
  std::string images, labels, test_images, test_labels;
  std::size_t subset_train = 0;  // 0 = all
  std::size_t subset_test = 0;
  std::uint64_t dataset_seed = 1;
  std::size_t blobs_n_per_class = 200;
  double blobs_spread = 0.05;

  // model
  Architecture arch = Architecture::mlp({2, 16, 2});

  // perturbation
  PerturbMode perturb_mode = PerturbMode::None;
  DistributionSpec perturb_dist{DistributionSpec::Kind::Uniform, 0.3};
  std::size_t perturb_k = 10;
  bool include_clean = true;
  std::vector<std::uint64_t> seeds = {1};  // one trained model per entry

  // training
  TrainConfig train;

  // attacks
  std::vector<AttackSpec> attacks;
  bool pgd_random_start = true;

  std::uint64_t master_seed = 42;
  std::string out_dir;

  // canonical text form (the echo file) and its digest
  std::string echo() const;
  std::string hash() const;
};

// Parses the key-value config format ("key = value", '#' comments).
// Unknown keys, type errors and range violations raise ParseError with
// line context. A "preset = NAME" line expands before other keys apply.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);

// Applies a named preset onto a config. Known names:
//   setting_A_mnist .. setting_E_mnist, setting_G_mnist  (no F, as published)
//   mnist_uniform, mnist_gauss, mnist_k1, mnist_k5, mnist_k10, mnist_k20
void apply_preset(ExperimentConfig& cfg, const std::string& name);
const std::vector<std::string>& known_presets();

AttackSpec parse_attack_token(const std::string& token);

}  // namespace balltrain
