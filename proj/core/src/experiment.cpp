#include "balltrain/experiment.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace balltrain {

std::pair<Dataset, Dataset> resolve_datasets(const ExperimentConfig& cfg) {
  Dataset train_ds, test_ds;
  if (cfg.dataset == "blobs") {
    const std::vector<std::pair<double, double>> centers = {{0.3, 0.3}, {0.7, 0.7}};
    train_ds = synthetic_blobs(cfg.blobs_n_per_class, centers, cfg.blobs_spread,
                               derive_seed(cfg.dataset_seed, "train"));
    test_ds = synthetic_blobs(cfg.blobs_n_per_class / 4 + 1, centers, cfg.blobs_spread,
                              derive_seed(cfg.dataset_seed, "test"));
  } else {
    train_ds = load_idx(cfg.images, cfg.labels);
    test_ds = cfg.test_images.empty() ? train_ds : load_idx(cfg.test_images, cfg.test_labels);
  }
  if (cfg.subset_train > 0) train_ds = subset(train_ds, cfg.subset_train, cfg.dataset_seed);
  if (cfg.subset_test > 0)
    test_ds = subset(test_ds, cfg.subset_test, derive_seed(cfg.dataset_seed, "testsub"));
  return {std::move(train_ds), std::move(test_ds)};
}

namespace {

ModelParams<float> train_one_model(const ExperimentConfig& cfg, const Dataset& train_ds,
                                   std::uint64_t pert_seed, const std::string& out_dir,
                                   std::size_t model_idx) {
  // Models in a multi-seed run differ only in their perturbation set:
  // init and shuffle streams derive from the master seed alone.
  ModelParams<float> model =
      init_model<float>(cfg.arch, derive_seed(cfg.master_seed, "init"));
  TrainConfig tc = cfg.train;
  tc.shuffle_seed = derive_seed(cfg.master_seed, "shuffle");

  TrainOptions opts;
  opts.mode = cfg.perturb_mode;
  opts.include_clean = cfg.include_clean;
  opts.stats_csv = out_dir + "/train_stats_model" + std::to_string(model_idx) + ".csv";

  PerturbationSet pset;
  if (cfg.perturb_mode == PerturbMode::Constant) {
    pset = sample_perturbation_set(train_ds, cfg.perturb_dist, cfg.perturb_k, pert_seed);
    save_perturbation_set(pset, out_dir + "/pset_model" + std::to_string(model_idx) + ".bin");
    opts.pset = &pset;
  } else if (cfg.perturb_mode == PerturbMode::Variable) {
    opts.spec = cfg.perturb_dist;
    opts.variable_seed = pert_seed;
  }
  train_run(model, train_ds, opts, tc);
  return model;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  auto [train_ds, test_ds] = resolve_datasets(cfg);
  const std::string config_hash = cfg.hash();
  {
    std::ofstream echo(out_dir + "/config_resolved.txt");
    echo << cfg.echo();
  }
  const auto t0 = std::chrono::system_clock::now();

  ExperimentResult result;
  std::vector<ModelParams<float>> models;
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    ModelParams<float> m = train_one_model(cfg, train_ds, cfg.seeds[i], out_dir, i);
    const std::string ckpt = out_dir + "/model" + std::to_string(i) + ".ckpt";
    save_checkpoint(m, ckpt);
    result.checkpoint_paths.push_back(ckpt);
    models.push_back(std::move(m));
  }

  EvalReport& report = result.report;
  const std::uint64_t attack_rs = derive_seed(cfg.master_seed, "attack_rs");

  for (const auto& a0 : cfg.attacks) {
    AttackSpec spec = a0;
    spec.cfg.rs_seed = attack_rs;

    // white-box rows
    std::vector<double> wb(models.size());
    for (std::size_t i = 0; i < models.size(); ++i) {
      wb[i] = spec.kind == AttackKind::None ? accuracy(models[i], test_ds)
                                            : adversarial_accuracy(models[i], test_ds, spec);
      ReportRow r;
      r.setting = "white_box";
      r.attack = spec.label();
      r.epsilon = spec.kind == AttackKind::None ? 0 : spec.cfg.epsilon;
      if (spec.kind == AttackKind::Pgd) {
        r.iterations = spec.cfg.iterations;
        r.eta = spec.cfg.step_eta;
      }
      r.target_model = "model" + std::to_string(i);
      r.accuracy_pct = wb[i];
      r.seed = std::to_string(cfg.seeds[i]);
      r.config_hash = config_hash;
      report.rows.push_back(r);
    }
    {
      ReportRow r;
      r.setting = "white_box";
      r.attack = spec.label();
      r.epsilon = spec.kind == AttackKind::None ? 0 : spec.cfg.epsilon;
      if (spec.kind == AttackKind::Pgd) {
        r.iterations = spec.cfg.iterations;
        r.eta = spec.cfg.step_eta;
      }
      r.target_model = "aggregate";
      r.agg = aggregate_runs(wb);
      r.config_hash = config_hash;
      report.rows.push_back(r);
    }

    // black-box rows: adversarial examples cached per source so every
    // target sees identical inputs
    if (models.size() >= 2 && spec.kind != AttackKind::None) {
      std::vector<std::vector<Tensor<float>>> per_source(models.size());
      for (std::size_t s = 0; s < models.size(); ++s) {
        per_source[s] = generate_adversarial(models[s], test_ds, spec);
        save_adv_dump(out_dir + "/adv_" + spec.label() + "_model" + std::to_string(s) + ".bin",
                      per_source[s], checkpoint_hash(models[s]));
      }
      std::vector<double> bb(models.size());
      for (std::size_t t = 0; t < models.size(); ++t) {
        double sum = 0;
        for (std::size_t s = 0; s < models.size(); ++s) {
          if (s == t) continue;
          sum += accuracy_on(models[t], per_source[s], test_ds.labels);
        }
        bb[t] = sum / double(models.size() - 1);
        ReportRow r;
        r.setting = "black_box";
        r.attack = spec.label();
        r.epsilon = spec.cfg.epsilon;
        if (spec.kind == AttackKind::Pgd) {
          r.iterations = spec.cfg.iterations;
          r.eta = spec.cfg.step_eta;
        }
        r.target_model = "model" + std::to_string(t);
        r.accuracy_pct = bb[t];
        r.seed = std::to_string(cfg.seeds[t]);
        r.config_hash = config_hash;
        report.rows.push_back(r);
      }
      ReportRow r;
      r.setting = "black_box";
      r.attack = spec.label();
      r.epsilon = spec.cfg.epsilon;
      if (spec.kind == AttackKind::Pgd) {
        r.iterations = spec.cfg.iterations;
        r.eta = spec.cfg.step_eta;
      }
      r.target_model = "aggregate";
      r.agg = aggregate_runs(bb);
      r.config_hash = config_hash;
      report.rows.push_back(r);
    }
  }

  report.metadata["config_hash"] = config_hash;
  report.metadata["dataset"] = train_ds.name;
  report.metadata["arch"] = cfg.arch.str();
  report.metadata["n_models"] = std::to_string(models.size());
  if (models.size() == 1) report.metadata["aggregate_note"] = "n=1: std 0 by convention";
  report.metadata["black_box_pooling"] =
      "per-target mean over sources, then mean/std over targets";

  result.report_csv = out_dir + "/report.csv";
  write_report_csv(report, result.report_csv);

  // timestamps and host info live here, not in report.csv
  {
    std::ofstream meta(out_dir + "/metadata.txt");
    const auto t1 = std::chrono::system_clock::now();
    meta << "started_unix = "
         << std::chrono::duration_cast<std::chrono::seconds>(t0.time_since_epoch()).count()
         << "\nfinished_unix = "
         << std::chrono::duration_cast<std::chrono::seconds>(t1.time_since_epoch()).count()
         << "\n";
    for (const auto& [k, v] : report.metadata) meta << k << " = " << v << "\n";
  }
  return result;
}

void compare_settings(const ExperimentConfig& base, const std::vector<std::string>& presets,
                      const std::string& out_dir) {
  fs::create_directories(out_dir);
  // shared attack columns, mirroring the settings-comparison layout
  const std::vector<std::string> attack_cols = {"none", "fgsm", "pgd20", "pgd40", "pgd100"};

  std::ofstream table(out_dir + "/compare_report.csv");
  table << "setting";
  for (const auto& c : attack_cols) table << "," << c;
  table << "\n";

  for (const auto& preset : presets) {
    ExperimentConfig cfg = base;
    apply_preset(cfg, preset);
    // preset changes only the method; dataset plumbing comes from base
    cfg.dataset = base.dataset;
    cfg.images = base.images;
    cfg.labels = base.labels;
    cfg.test_images = base.test_images;
    cfg.test_labels = base.test_labels;
    cfg.subset_train = base.subset_train;
    cfg.subset_test = base.subset_test;
    cfg.dataset_seed = base.dataset_seed;
    cfg.arch = base.arch;
    cfg.train = base.train;
    cfg.seeds = base.seeds;
    cfg.master_seed = base.master_seed;
    const double eps = cfg.perturb_dist.param / 2.0;  // train bound = 2x attack eps
    const double eta = eps / 4.0;
    cfg.attacks.clear();
    for (const auto& c : attack_cols) {
      if (c == "none")
        cfg.attacks.push_back(parse_attack_token("none"));
      else if (c == "fgsm")
        cfg.attacks.push_back(parse_attack_token("fgsm:" + std::to_string(eps)));
      else
        cfg.attacks.push_back(parse_attack_token("pgd:" + std::to_string(eps) + "," +
                                                 std::to_string(eta) + "," + c.substr(3)));
    }
    ExperimentResult res = run_experiment(cfg, out_dir + "/" + preset);
    table << preset;
    for (const auto& c : attack_cols) {
      for (const auto& r : res.report.rows)
        if (r.setting == "white_box" && r.target_model == "aggregate" &&
            (r.attack == c || (c == "none" && r.attack == "none"))) {
          table << "," << format_pct(r.agg.mean);
          break;
        }
    }
    table << "\n";
  }
}

}  // namespace balltrain
