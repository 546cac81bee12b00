#pragma once

#include <string>
#include <vector>

#include "balltrain/config.hpp"
#include "balltrain/eval.hpp"

namespace balltrain {

struct ExperimentResult {
  EvalReport report;
  std::vector<std::string> checkpoint_paths;
  std::string report_csv;
};

// Loads/builds the train and test datasets a config describes.
std::pair<Dataset, Dataset> resolve_datasets(const ExperimentConfig& cfg);

// Trains one model per perturbation seed, evaluates every attack row
// white-box (and black-box for >= 2 seeds), writes report.csv, the resolved
// config echo, checkpoints, perturbation sets and adversarial dumps under
// out_dir. Timestamps go to a sidecar metadata file so report.csv is
// byte-reproducible.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

// Runs one experiment per preset (each in out_dir/<preset>/) and writes a
// combined wide-format table out_dir/compare_report.csv with one row per
// setting and one column per shared attack.
void compare_settings(const ExperimentConfig& base, const std::vector<std::string>& presets,
                      const std::string& out_dir);

}  // namespace balltrain
