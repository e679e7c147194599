#include "amjl/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "amjl/checkpoint.hpp"
#include "amjl/config.hpp"
#include "amjl/datasets.hpp"
#include "amjl/eval.hpp"
#include "amjl/experiment.hpp"
#include "amjl/joint.hpp"

namespace fs = std::filesystem;

namespace amjl {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommonFlags {
  std::string config;
  std::string dataset;
  std::optional<double> missing_rate;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
  std::string ablation;
  std::string mnist_dir;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "key=value config file")->check(CLI::ExistingFile);
  cmd->add_option("--dataset", f.dataset, "sin-single, sin-double or mnist12")
      ->check(CLI::IsMember({"sin-single", "sin-double", "mnist12"}));
  cmd->add_option("--missing-rate", f.missing_rate, "fraction of unobserved coordinates")->check(CLI::Range(0.0, 0.999999));
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--out", f.out, "run directory");
  cmd->add_option("--ablation", f.ablation, "full, no-meta or no-adaptation")
      ->check(CLI::IsMember({"full", "no-meta", "no-adaptation"}));
  cmd->add_option("--mnist-dir", f.mnist_dir, "directory with MNIST IDX files");
}

/// Defaults for the dataset, then the config file, then the explicit flags.
JointConfig resolve_config(const CommonFlags& f, const JointConfig* stored = nullptr) {
  JointConfig cfg = stored ? *stored : default_config(f.dataset.empty() ? "sin-single" : f.dataset);
  if (!stored && !f.dataset.empty()) cfg = default_config(f.dataset);
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    std::stringstream ss;
    ss << in.rdbuf();
    JointConfig parsed = parse_config(ss.str(), cfg);
    if (!stored && f.dataset.empty() && parsed.dataset != cfg.dataset)
      parsed = parse_config(ss.str(), default_config(parsed.dataset));
    cfg = parsed;
  }
  if (!f.dataset.empty() && cfg.dataset != f.dataset) {
    if (stored) throw UsageError("--dataset " + f.dataset + " disagrees with the run's dataset " + cfg.dataset);
    cfg.dataset = f.dataset;
  }
  if (f.missing_rate) cfg.missing_rate = *f.missing_rate;
  if (f.seed) cfg.seed = *f.seed;
  if (!f.ablation.empty()) cfg.ablation = parse_ablation(f.ablation);
  cfg.validate();
  return cfg;
}

fs::path mnist_dir(const CommonFlags& f) { return f.mnist_dir.empty() ? default_mnist_dir() : fs::path(f.mnist_dir); }

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
}

/// Reads the run directory's data files, creating them first when absent.
ExperimentData obtain_data(const JointConfig& cfg, const CommonFlags& f) {
  const fs::path dir = f.out;
  const auto train_path = dir / "train_missing.csv";
  const auto test_path = dir / "test.csv";
  if (fs::exists(train_path) && fs::exists(test_path)) {
    ExperimentData d;
    d.train = read_missing_csv(train_path).missing;
    auto test = read_missing_csv(test_path);
    if (!test.truth) throw std::runtime_error(test_path.string() + " has no ground-truth columns");
    d.test = std::move(*test.truth);
    return d;
  }
  fs::create_directories(dir);
  auto d = make_experiment_data(cfg, cfg.seed, mnist_dir(f));
  write_missing_csv(train_path, d.train);
  Rng mask_rng = make_stream(cfg.seed, 0x74657374ULL);
  const auto masked = mask_dataset(d.test, MaskDistributionSpec::from_missing_rate(d.test.dim, cfg.missing_rate), mask_rng);
  write_missing_csv(test_path, masked.missing, &d.test);
  return d;
}

std::optional<JointConfig> stored_config(const fs::path& dir) {
  const auto p = dir / "config.txt";
  if (!fs::exists(p)) return std::nullopt;
  const auto base = default_config("sin-single");
  auto first = load_config(p, base);
  return load_config(p, default_config(first.dataset));
}

fs::path require_file(const fs::path& p) {
  if (!fs::exists(p)) throw UsageError("missing required file: " + p.string());
  return p;
}

void print_rows(const std::vector<EvalRow>& rows) {
  for (const auto& s : summarize(rows))
    std::printf("%-10s trained=%.2f eval=%.2f  top1=%.4f +- %.4f  topk=%.4f +- %.4f  (%zu seeds)\n",
                s.method.c_str(), s.trained_rate, s.eval_rate, s.top1_mean, s.top1_se, s.topk_mean, s.topk_se,
                s.seeds);
}

RolloutMode parse_mode(const std::string& s, const std::string& dataset) {
  if (s.empty()) return dataset == "mnist12" ? RolloutMode::greedy : RolloutMode::stochastic;
  if (s == "greedy") return RolloutMode::greedy;
  if (s == "stochastic") return RolloutMode::stochastic;
  throw UsageError("--policy-mode must be greedy or stochastic");
}

ImputerModel baseline_imputer(const fs::path& dir) {
  const auto pre = dir / "imputer_pretrained.ckpt";
  const auto p = fs::exists(pre) ? pre : require_file(dir / "imputer.ckpt");
  return ImputerModel::from_checkpoint(load_checkpoint(p, ModelRole::imputer));
}

int cmd_gen_data(const CommonFlags& f) {
  const auto cfg = resolve_config(f);
  fs::create_directories(f.out);
  const fs::path dir = f.out;
  for (const char* name : {"train_missing.csv", "test.csv"}) fs::remove(dir / name);
  const auto d = obtain_data(cfg, f);
  std::printf("wrote %zu training rows and %zu test rows (D=%zu) to %s\n", d.train.size(), d.test.size(),
              d.train.dim, dir.string().c_str());
  return 0;
}

/// Settings for a command that may extend an existing run directory.
JointConfig extend_config(const CommonFlags& f) {
  const auto stored = stored_config(f.out);
  return stored ? resolve_config(f, &*stored) : resolve_config(f);
}

int cmd_pretrain(const CommonFlags& f) {
  const auto cfg = extend_config(f);
  const auto d = obtain_data(cfg, f);
  std::vector<double> losses;
  const auto imputer = pretrain_imputer(cfg, d.train, cfg.seed, &losses);
  const fs::path dir = f.out;
  save_checkpoint(dir / "imputer_pretrained.ckpt", imputer.to_checkpoint());
  write_text(dir / "config.txt", config_to_text(cfg));
  std::printf("pretrained %zu epochs, final loss %.6g\n", losses.size(), losses.empty() ? 0.0 : losses.back());
  return 0;
}

int cmd_train_joint(const CommonFlags& f, bool trace) {
  const auto cfg = extend_config(f);
  const auto d = obtain_data(cfg, f);
  const fs::path dir = f.out;
  const auto pre = dir / "imputer_pretrained.ckpt";
  ImputerModel imputer;
  if (fs::exists(pre)) {
    imputer = ImputerModel::from_checkpoint(load_checkpoint(pre, ModelRole::imputer));
  } else {
    imputer = pretrain_imputer(cfg, d.train, cfg.seed);
    save_checkpoint(pre, imputer.to_checkpoint());
  }
  const auto text = config_to_text(cfg);
  write_text(dir / "config.txt", text);
  JointHooks hooks;
  hooks.on_iteration = [&](const RunRow& r) {
    if (r.iteration % 50 == 0)
      std::printf("iter %5zu  reward %.5f  L_u %.5f  L_s %.5f\n", r.iteration, r.reward_e1, r.loss_unsup, r.loss_sup);
  };
  auto res = joint_train(cfg, d.train, init_policy(cfg, d.train.dim, cfg.seed), std::move(imputer), hooks);
  res.record.config_echo = text;
  res.record.write_csv(dir / "run.csv");
  save_checkpoint(dir / "actor.ckpt", res.policy.actor_checkpoint());
  save_checkpoint(dir / "critic.ckpt", res.policy.critic_checkpoint());
  save_checkpoint(dir / "imputer.ckpt", res.imputer.to_checkpoint());
  if (trace) {
    // Traces on generated data for a slice of the training set.
    Rng rng = make_stream(cfg.seed, 0x74726163ULL);
    const std::size_t n = std::min<std::size_t>(64, d.train.size());
    const std::span<const MissingState> rows(d.train.rows.data(), n);
    const Mat xbar = generate_complete_batch(res.imputer, rows, rng);
    std::vector<Vec> sources;
    for (Eigen::Index c = 0; c < xbar.cols(); ++c) sources.emplace_back(xbar.col(c));
    const auto eps = run_episodes(res.policy, sources, horizon_for(d.train.dim, cfg.missing_rate),
                                  RolloutSpec{RolloutMode::stochastic, 0.0, DropoutMode::eval}, rng);
    const auto rewards = terminal_rewards(res.imputer, eps, RewardConfig{cfg.k_reward}, rng);
    write_episode_trace(dir / "episodes.csv", eps, rewards);
  }
  std::printf("trained %zu iterations; run written to %s\n", res.record.rows().size(), dir.string().c_str());
  return 0;
}

struct EvalFlags {
  std::string policy_mode;
  std::vector<double> rates;
  std::string method = "uninform";
  std::size_t n_seeds = 0;
};

JointConfig run_config(const CommonFlags& f) {
  const auto stored = stored_config(f.out);
  if (!stored) throw UsageError("missing required file: " + (fs::path(f.out) / "config.txt").string());
  return resolve_config(f, &*stored);
}

EvalOptions eval_options(const JointConfig& cfg, const EvalFlags& e, double trained_rate) {
  EvalOptions o;
  o.trained_rate = trained_rate;
  o.k = cfg.eval_k;
  o.n_seeds = e.n_seeds ? e.n_seeds : cfg.eval_seeds;
  o.seed = cfg.seed;
  return o;
}

int cmd_eval(const CommonFlags& f, const EvalFlags& e) {
  const fs::path dir = f.out;
  const auto actor_p = require_file(dir / "actor.ckpt");
  const auto critic_p = require_file(dir / "critic.ckpt");
  const auto imputer_p = require_file(dir / "imputer.ckpt");
  const auto stored = stored_config(dir);
  const double trained = stored ? stored->missing_rate : 0.0;
  const auto cfg = extend_config(f);
  const auto d = obtain_data(cfg, f);
  const auto policy = PolicyModel::from_checkpoints(load_checkpoint(actor_p, ModelRole::actor),
                                                    load_checkpoint(critic_p, ModelRole::critic));
  const auto imputer = ImputerModel::from_checkpoint(load_checkpoint(imputer_p, ModelRole::imputer));
  const auto rows = eval_policy("proposed", policy_measurer(policy, parse_mode(e.policy_mode, cfg.dataset)), imputer,
                                d.test, cfg.missing_rate, eval_options(cfg, e, trained));
  write_sweep_csv(dir / "eval.csv", rows);
  print_rows(rows);
  return 0;
}

int cmd_sweep(const CommonFlags& f, const EvalFlags& e) {
  const fs::path dir = f.out;
  const auto actor_p = require_file(dir / "actor.ckpt");
  const auto critic_p = require_file(dir / "critic.ckpt");
  const auto imputer_p = require_file(dir / "imputer.ckpt");
  const auto cfg = run_config(f);
  const auto d = obtain_data(cfg, f);
  const auto policy = PolicyModel::from_checkpoints(load_checkpoint(actor_p, ModelRole::actor),
                                                    load_checkpoint(critic_p, ModelRole::critic));
  const auto imputer = ImputerModel::from_checkpoint(load_checkpoint(imputer_p, ModelRole::imputer));
  const auto base = baseline_imputer(dir);
  const auto rates = e.rates.empty() ? std::vector<double>{0.75, 0.8, 0.85, 0.9, 0.95} : e.rates;
  const auto opts = eval_options(cfg, e, cfg.missing_rate);
  std::vector<EvalRow> rows;
  auto add = [&](std::vector<EvalRow> r) { rows.insert(rows.end(), r.begin(), r.end()); };
  add(sweep_missing_rates("proposed", policy_measurer(policy, parse_mode(e.policy_mode, cfg.dataset)), imputer,
                          d.test, rates, opts));
  add(sweep_missing_rates("uninform", uninform_measurer(), base, d.test, rates, opts));
  add(sweep_missing_rates("explicit", explicit_measurer(base, cfg.explicit_k), base, d.test, rates, opts));
  write_sweep_csv(dir / "sweep.csv", rows);
  print_rows(rows);
  return 0;
}

int cmd_baseline(const CommonFlags& f, const EvalFlags& e) {
  const fs::path dir = f.out;
  const auto stored = stored_config(dir);
  const auto cfg = extend_config(f);
  const auto d = obtain_data(cfg, f);
  ImputerModel imputer;
  const auto pre = dir / "imputer_pretrained.ckpt";
  if (fs::exists(pre) || fs::exists(dir / "imputer.ckpt")) {
    imputer = baseline_imputer(dir);
  } else {
    imputer = pretrain_imputer(cfg, d.train, cfg.seed);
    save_checkpoint(pre, imputer.to_checkpoint());
    if (!stored) write_text(dir / "config.txt", config_to_text(cfg));
  }
  Measurer m;
  if (e.method == "uninform")
    m = uninform_measurer();
  else if (e.method == "explicit")
    m = explicit_measurer(imputer, cfg.explicit_k);
  else
    throw UsageError("--method must be uninform or explicit");
  const auto rows = eval_policy(e.method, m, imputer, d.test, cfg.missing_rate, eval_options(cfg, e, cfg.missing_rate));
  write_sweep_csv(dir / ("baseline_" + e.method + ".csv"), rows);
  print_rows(rows);
  return 0;
}

int cmd_grad_check(std::vector<std::size_t> dims, const std::string& act, std::size_t nets, std::uint64_t seed) {
  if (dims.size() < 2) throw UsageError("--dims needs at least two entries");
  const Activation hidden = act == "relu" ? Activation::relu : Activation::tanh;
  double worst = 0.0;
  for (std::size_t s = 0; s < nets; ++s) {
    Rng rng = make_stream(seed, s);
    DenseNet net(dims, hidden, Activation::identity, {}, rng);
    std::normal_distribution<double> n01;
    Vec x(static_cast<Eigen::Index>(dims.front()));
    for (auto& v : x) v = n01(rng);
    Vec target(static_cast<Eigen::Index>(dims.back()));
    for (auto& v : target) v = n01(rng);
    const LossFn loss = [&](const Vec& out, Vec* g) {
      const Vec r = out - target;
      if (g) *g = r;
      return 0.5 * r.squaredNorm();
    };
    const double err = grad_check(net, x, loss);
    worst = std::max(worst, err);
  }
  std::printf("max relative error %.3e over %zu nets\n", worst, nets);
  return worst < 1e-4 ? 0 : 2;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Joint measurement-policy and imputer training from missing data"};
  app.require_subcommand(1);
  CommonFlags f;
  EvalFlags e;
  bool trace = false;
  std::vector<std::size_t> gc_dims{6, 8, 8, 4};
  std::string gc_act = "tanh";
  std::size_t gc_nets = 10;
  std::uint64_t gc_seed = 1;

  auto* gen = app.add_subcommand("gen-data", "generate and mask a dataset");
  auto* pre = app.add_subcommand("pretrain", "pretrain the imputer on missing data");
  auto* train = app.add_subcommand("train-joint", "joint policy/imputer training");
  auto* ev = app.add_subcommand("eval", "evaluate a trained run on ground truth");
  auto* sw = app.add_subcommand("sweep", "evaluate policy and baselines across missing rates");
  auto* bl = app.add_subcommand("baseline", "evaluate a baseline policy");
  auto* gc = app.add_subcommand("grad-check", "finite-difference check of backpropagation");
  for (auto* c : {gen, pre, train, ev, sw, bl}) add_common(c, f);
  train->add_flag("--episodes", trace, "also write episodes.csv");
  for (auto* c : {ev, sw}) c->add_option("--policy-mode", e.policy_mode, "greedy or stochastic");
  for (auto* c : {ev, sw, bl}) c->add_option("--eval-seeds", e.n_seeds, "evaluation seeds");
  sw->add_option("--rates", e.rates, "evaluation missing rates")->delimiter(',');
  bl->add_option("--method", e.method, "uninform or explicit")->check(CLI::IsMember({"uninform", "explicit"}));
  gc->add_option("--dims", gc_dims, "layer widths")->delimiter(',');
  gc->add_option("--activation", gc_act, "tanh or relu")->check(CLI::IsMember({"tanh", "relu"}));
  gc->add_option("--nets", gc_nets, "number of random nets");
  gc->add_option("--seed", gc_seed, "seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& s) {
    return app.exit(s);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return 1;
  }

  try {
    if (*gen) return cmd_gen_data(f);
    if (*pre) return cmd_pretrain(f);
    if (*train) return cmd_train_joint(f, trace);
    if (*ev) return cmd_eval(f, e);
    if (*sw) return cmd_sweep(f, e);
    if (*bl) return cmd_baseline(f, e);
    if (*gc) return cmd_grad_check(gc_dims, gc_act, gc_nets, gc_seed);
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace amjl
