#include "balltrain/config.hpp"

#include <fstream>
#include <sstream>

#include "balltrain/hash.hpp"

namespace balltrain {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string mode_str(PerturbMode m) {
  switch (m) {
    case PerturbMode::None: return "none";
    case PerturbMode::Constant: return "constant";
    default: return "variable";
  }
}

bool parse_bool(const std::string& v, const std::string& ctx) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParseError(ctx + ": expected true/false, got '" + v + "'");
}

double parse_double(const std::string& v, const std::string& ctx) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (...) {
    throw ParseError(ctx + ": expected a number, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& v, const std::string& ctx) {
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    std::size_t pos = 0;
    std::uint64_t n = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (...) {
    throw ParseError(ctx + ": expected a non-negative integer, got '" + v + "'");
  }
}

DistributionSpec parse_dist(const std::string& v, const std::string& ctx) {
  DistributionSpec d;
  auto colon = v.find(':');
  if (colon == std::string::npos)
    throw ParseError(ctx + ": expected uniform:BOUND or gauss:SIGMA, got '" + v + "'");
  const std::string kind = v.substr(0, colon);
  d.param = parse_double(v.substr(colon + 1), ctx);
  if (d.param <= 0) throw ParseError(ctx + ": distribution parameter must be > 0");
  if (kind == "uniform")
    d.kind = DistributionSpec::Kind::Uniform;
  else if (kind == "gauss")
    d.kind = DistributionSpec::Kind::Gaussian;
  else
    throw ParseError(ctx + ": unknown distribution '" + kind + "'");
  return d;
}

}  // namespace

AttackSpec parse_attack_token(const std::string& token) {
  AttackSpec s;
  if (token == "none") {
    s.kind = AttackKind::None;
    return s;
  }
  auto colon = token.find(':');
  const std::string head = token.substr(0, colon);
  std::vector<double> nums;
  if (colon != std::string::npos) {
    std::stringstream ss(token.substr(colon + 1));
    std::string t;
    while (std::getline(ss, t, ','))
      nums.push_back(parse_double(t, "attack '" + token + "'"));
  }
  if (head == "fgsm") {
    if (nums.size() != 1)
      throw ParseError("attack 'fgsm' takes fgsm:EPSILON, got '" + token + "'");
    s.kind = AttackKind::Fgsm;
    s.cfg.epsilon = nums[0];
  } else if (head == "pgd") {
    if (nums.size() != 3)
      throw ParseError("attack 'pgd' takes pgd:EPSILON,ETA,ITERS, got '" + token + "'");
    s.kind = AttackKind::Pgd;
    s.cfg.epsilon = nums[0];
    s.cfg.step_eta = nums[1];
    s.cfg.iterations = std::size_t(nums[2]);
    if (s.cfg.iterations < 1) throw ParseError("attack '" + token + "': iters must be >= 1");
  } else {
    throw ParseError("unknown attack '" + head + "'");
  }
  if (s.cfg.epsilon < 0) throw ParseError("attack '" + token + "': epsilon must be >= 0");
  return s;
}

const std::vector<std::string>& known_presets() {
  static const std::vector<std::string> names = {
      "setting_A_mnist", "setting_B_mnist", "setting_C_mnist", "setting_D_mnist",
      "setting_E_mnist", "setting_G_mnist", "mnist_uniform",   "mnist_gauss",
      "mnist_k1",        "mnist_k5",        "mnist_k10",       "mnist_k20"};
  return names;
}

void apply_preset(ExperimentConfig& cfg, const std::string& name) {
  auto mnist_base = [&] {
    cfg.arch = Architecture::lenet(1, 28, 28, 10);
    cfg.dataset = "idx";
    cfg.perturb_dist = {DistributionSpec::Kind::Uniform, 0.3};
    cfg.train.optimizer = TrainConfig::Optimizer::Adam;
    cfg.train.learning_rate = 0.001;
    cfg.train.epochs = 50;
    cfg.attacks = {parse_attack_token("none"), parse_attack_token("fgsm:0.3"),
                   parse_attack_token("pgd:0.3,0.00392156862745098,100")};
  };
  if (name == "setting_A_mnist") {
    mnist_base();
    cfg.perturb_mode = PerturbMode::None;
  } else if (name == "setting_B_mnist") {
    mnist_base();
    cfg.perturb_mode = PerturbMode::Variable;
    cfg.include_clean = false;
  } else if (name == "setting_C_mnist") {
    mnist_base();
    cfg.perturb_mode = PerturbMode::Variable;
    cfg.include_clean = true;
  } else if (name == "setting_D_mnist") {
    mnist_base();
    cfg.perturb_mode = PerturbMode::Variable;
    cfg.perturb_dist = {DistributionSpec::Kind::Gaussian, 0.3};
    cfg.include_clean = false;
  } else if (name == "setting_E_mnist") {
    mnist_base();
    cfg.perturb_mode = PerturbMode::Variable;
    cfg.perturb_dist = {DistributionSpec::Kind::Gaussian, 0.3};
    cfg.include_clean = true;
  } else if (name == "setting_G_mnist") {
    mnist_base();
    cfg.perturb_mode = PerturbMode::Constant;
    cfg.perturb_k = 10;
    cfg.include_clean = true;
  } else if (name == "mnist_uniform") {
    mnist_base();
    cfg.perturb_mode = PerturbMode::Constant;
    cfg.perturb_k = 10;
  } else if (name == "mnist_gauss") {
    mnist_base();
    cfg.perturb_mode = PerturbMode::Constant;
    cfg.perturb_dist = {DistributionSpec::Kind::Gaussian, 0.3};
    cfg.perturb_k = 10;
  } else if (name.rfind("mnist_k", 0) == 0) {
    const std::string ks = name.substr(7);
    if (ks != "1" && ks != "5" && ks != "10" && ks != "20")
      throw ParseError("unknown preset '" + name + "'");
    mnist_base();
    cfg.perturb_mode = PerturbMode::Constant;
    cfg.perturb_k = std::stoull(ks);
  } else {
    throw ParseError("unknown preset '" + name + "'");
  }
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool dataset_seen = false, arch_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string ctx = origin + ":" + std::to_string(lineno);
    auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(ctx + ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (val.empty()) throw ParseError(ctx + ": empty value for '" + key + "'");

    if (key == "preset") {
      apply_preset(cfg, val);
      dataset_seen = arch_seen = true;
    } else if (key == "dataset") {
      if (val != "blobs" && val != "idx")
        throw ParseError(ctx + ": dataset must be 'blobs' or 'idx'");
      cfg.dataset = val;
      dataset_seen = true;
    } else if (key == "images") {
      cfg.images = val;
    } else if (key == "labels") {
      cfg.labels = val;
    } else if (key == "test_images") {
      cfg.test_images = val;
    } else if (key == "test_labels") {
      cfg.test_labels = val;
    } else if (key == "subset_train") {
      cfg.subset_train = parse_u64(val, ctx);
    } else if (key == "subset_test") {
      cfg.subset_test = parse_u64(val, ctx);
    } else if (key == "dataset_seed") {
      cfg.dataset_seed = parse_u64(val, ctx);
    } else if (key == "blobs_n_per_class") {
      cfg.blobs_n_per_class = parse_u64(val, ctx);
    } else if (key == "blobs_spread") {
      cfg.blobs_spread = parse_double(val, ctx);
      if (cfg.blobs_spread < 0) throw ParseError(ctx + ": blobs_spread must be >= 0");
    } else if (key == "arch") {
      try {
        cfg.arch = Architecture::parse(val);
      } catch (const std::exception& e) {
        throw ParseError(ctx + ": " + e.what());
      }
      arch_seen = true;
    } else if (key == "perturb_mode") {
      if (val == "none")
        cfg.perturb_mode = PerturbMode::None;
      else if (val == "constant")
        cfg.perturb_mode = PerturbMode::Constant;
      else if (val == "variable")
        cfg.perturb_mode = PerturbMode::Variable;
      else
        throw ParseError(ctx + ": perturb_mode must be none/constant/variable");
    } else if (key == "perturb_dist") {
      cfg.perturb_dist = parse_dist(val, ctx);
    } else if (key == "perturb_k") {
      cfg.perturb_k = parse_u64(val, ctx);
    } else if (key == "include_clean") {
      cfg.include_clean = parse_bool(val, ctx);
    } else if (key == "seeds") {
      cfg.seeds.clear();
      std::stringstream ss(val);
      std::string tok;
      while (std::getline(ss, tok, ','))
        cfg.seeds.push_back(parse_u64(trim(tok), ctx));
      if (cfg.seeds.empty()) throw ParseError(ctx + ": seeds list is empty");
    } else if (key == "optimizer") {
      if (val == "sgd")
        cfg.train.optimizer = TrainConfig::Optimizer::Sgd;
      else if (val == "adam")
        cfg.train.optimizer = TrainConfig::Optimizer::Adam;
      else
        throw ParseError(ctx + ": optimizer must be sgd or adam");
    } else if (key == "lr") {
      cfg.train.learning_rate = parse_double(val, ctx);
      if (cfg.train.learning_rate <= 0) throw ParseError(ctx + ": lr must be > 0");
    } else if (key == "lr_decay") {
      cfg.train.lr_decay = parse_double(val, ctx);
      if (cfg.train.lr_decay <= 0 || cfg.train.lr_decay > 1)
        throw ParseError(ctx + ": lr_decay must be in (0,1]");
    } else if (key == "momentum") {
      cfg.train.momentum = parse_double(val, ctx);
    } else if (key == "epochs") {
      cfg.train.epochs = parse_u64(val, ctx);
      if (cfg.train.epochs == 0) throw ParseError(ctx + ": epochs must be >= 1");
    } else if (key == "batch_size") {
      cfg.train.batch_size = parse_u64(val, ctx);
      if (cfg.train.batch_size == 0) throw ParseError(ctx + ": batch_size must be >= 1");
    } else if (key == "master_seed") {
      cfg.master_seed = parse_u64(val, ctx);
    } else if (key == "attacks") {
      cfg.attacks.clear();
      std::stringstream ss(val);
      std::string tok;
      while (ss >> tok) {
        try {
          cfg.attacks.push_back(parse_attack_token(tok));
        } catch (const std::exception& e) {
          throw ParseError(ctx + ": " + e.what());
        }
      }
    } else if (key == "pgd_random_start") {
      cfg.pgd_random_start = parse_bool(val, ctx);
    } else if (key == "out") {
      cfg.out_dir = val;
    } else {
      throw ParseError(ctx + ": unknown key '" + key + "'");
    }
  }
  if (!dataset_seen || !arch_seen)
    throw ParseError(origin + ": config must set at least 'dataset' and 'arch' (or a preset)");
  if (cfg.dataset == "idx" && cfg.images.empty())
    throw ParseError(origin + ": dataset=idx requires 'images' and 'labels' paths");
  if (cfg.attacks.empty()) cfg.attacks = {parse_attack_token("none")};
  for (auto& a : cfg.attacks) a.cfg.random_start = cfg.pgd_random_start;
  cfg.train.validate();
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), path);
}

std::string ExperimentConfig::echo() const {
  std::ostringstream os;
  os << "dataset = " << dataset << "\n";
  if (!images.empty()) os << "images = " << images << "\n";
  if (!labels.empty()) os << "labels = " << labels << "\n";
  if (!test_images.empty()) os << "test_images = " << test_images << "\n";
  if (!test_labels.empty()) os << "test_labels = " << test_labels << "\n";
  os << "subset_train = " << subset_train << "\n"
     << "subset_test = " << subset_test << "\n"
     << "dataset_seed = " << dataset_seed << "\n";
  if (dataset == "blobs")
    os << "blobs_n_per_class = " << blobs_n_per_class << "\n"
       << "blobs_spread = " << blobs_spread << "\n";
  os << "arch = " << arch.str() << "\n"
     << "perturb_mode = " << mode_str(perturb_mode) << "\n";
  if (perturb_mode != PerturbMode::None)
    os << "perturb_dist = " << perturb_dist.str() << "\n"
       << "perturb_k = " << perturb_k << "\n"
       << "include_clean = " << (include_clean ? "true" : "false") << "\n";
  os << "seeds = ";
  for (std::size_t i = 0; i < seeds.size(); ++i) os << (i ? "," : "") << seeds[i];
  os << "\noptimizer = "
     << (train.optimizer == TrainConfig::Optimizer::Adam ? "adam" : "sgd") << "\n"
     << "lr = " << train.learning_rate << "\n"
     << "lr_decay = " << train.lr_decay << "\n"
     << "momentum = " << train.momentum << "\n"
     << "epochs = " << train.epochs << "\n"
     << "batch_size = " << train.batch_size << "\n"
     << "master_seed = " << master_seed << "\n"
     << "pgd_random_start = " << (pgd_random_start ? "true" : "false") << "\n"
     << "attacks =";
  for (const auto& a : attacks) {
    os << " ";
    switch (a.kind) {
      case AttackKind::None: os << "none"; break;
      case AttackKind::Fgsm: os << "fgsm:" << a.cfg.epsilon; break;
      case AttackKind::Pgd:
        os << "pgd:" << a.cfg.epsilon << "," << a.cfg.step_eta << "," << a.cfg.iterations;
        break;
    }
  }
  os << "\n";
  return os.str();
}

std::string ExperimentConfig::hash() const {
  Hasher h;
  h.update_str(echo());
  return h.hex();
}

}  // namespace balltrain
