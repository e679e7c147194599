#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "amjl/datasets.hpp"
#include "amjl/experiment.hpp"
#include "amjl/joint.hpp"
#include "test_util.hpp"

using namespace amjl;
using testutil::vec;

namespace {

JointConfig tiny_config() {
  JointConfig c = default_config("sin-single");
  c.imputer_hidden = {16};
  c.actor_hidden = {16};
  c.critic_hidden = {8};
  c.noise_dim = 2;
  c.batch_size = 8;
  c.outer_iterations = 4;
  c.finetune_iterations = 3;
  c.pretrain_epochs = 1;
  c.alpha = c.alpha_prime = c.beta = c.beta_prime = 1e-2;
  return c;
}

struct Fixture {
  JointConfig cfg = tiny_config();
  MissingDataset data;
  ImputerModel imputer;
  PolicyModel policy;

  Fixture() {
    auto split = gen_sinusoid_dataset(SinusoidMode::single, 5, 64, 4);
    Rng rng(1);
    data = mask_dataset(split.train, MaskDistributionSpec::from_missing_rate(100, cfg.missing_rate), rng).missing;
    imputer = pretrain_imputer(cfg, data, 3);
    policy = init_policy(cfg, 100, 3);
  }
};

bool same_params(const DenseNet& a, const DenseNet& b) {
  return a.num_params() == b.num_params() && std::equal(a.params().begin(), a.params().end(), b.params().begin());
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("zero outer iterations return the starting models") {
  Fixture f;
  f.cfg.outer_iterations = 0;
  const auto res = joint_train(f.cfg, f.data, f.policy, f.imputer);
  CHECK(same_params(res.policy.actor, f.policy.actor));
  CHECK(same_params(res.policy.critic, f.policy.critic));
  CHECK(same_params(res.imputer.net(), f.imputer.net()));
  CHECK(res.record.rows().empty());
}

TEST_CASE("joint training records finite rows and moves the models") {
  Fixture f;
  const auto res = joint_train(f.cfg, f.data, f.policy, f.imputer);
  REQUIRE(res.record.rows().size() == 4);
  for (const auto& r : res.record.rows()) {
    CHECK(std::isfinite(r.reward_e1));
    CHECK(r.reward_e1 <= 0.0);
    REQUIRE(r.reward_e2.has_value());
    CHECK(std::isfinite(*r.reward_e2));
  }
  CHECK_FALSE(same_params(res.policy.actor, f.policy.actor));
  CHECK_FALSE(same_params(res.imputer.net(), f.imputer.net()));
}

TEST_CASE("full training with a zero meta weight equals the no-meta ablation") {
  Fixture f;
  f.cfg.beta_prime = 0.0;
  const auto full = joint_train(f.cfg, f.data, f.policy, f.imputer);
  auto cfg = f.cfg;
  cfg.ablation = Ablation::no_meta;
  const auto nometa = joint_train(cfg, f.data, f.policy, f.imputer);
  CHECK(same_params(full.policy.actor, nometa.policy.actor));
  CHECK(same_params(full.policy.critic, nometa.policy.critic));
  CHECK(same_params(full.imputer.net(), nometa.imputer.net()));
  CHECK_FALSE(nometa.record.rows()[0].reward_e2.has_value());
}

TEST_CASE("hypothetical adaptation never leaks into the imputer") {
  Fixture f;
  f.cfg.beta_prime = 0.0;
  const auto normal = joint_train(f.cfg, f.data, f.policy, f.imputer);
  JointHooks stub;
  stub.hypothetical_adapt = [](const ImputerModel& phi, const ImputerModel&) { return phi; };
  const auto stubbed = joint_train(f.cfg, f.data, f.policy, f.imputer, stub);
  CHECK(same_params(normal.imputer.net(), stubbed.imputer.net()));
  CHECK(same_params(normal.policy.actor, stubbed.policy.actor));
}

TEST_CASE("no-adaptation keeps the imputer fixed in the loop and fine-tunes afterwards") {
  Fixture f;
  f.cfg.ablation = Ablation::no_adaptation;
  f.cfg.finetune_iterations = 0;
  const auto frozen = joint_train(f.cfg, f.data, f.policy, f.imputer);
  CHECK(same_params(frozen.imputer.net(), f.imputer.net()));
  for (const auto& r : frozen.record.rows()) CHECK_FALSE(r.reward_e2.has_value());
  f.cfg.finetune_iterations = 3;
  const auto tuned = joint_train(f.cfg, f.data, f.policy, f.imputer);
  CHECK(same_params(tuned.policy.actor, frozen.policy.actor));
  CHECK_FALSE(same_params(tuned.imputer.net(), f.imputer.net()));
}

TEST_CASE("finetune_after with zero iterations is the identity") {
  Fixture f;
  f.cfg.finetune_iterations = 0;
  CHECK(same_params(finetune_after(f.policy, f.imputer, f.data, f.cfg).net(), f.imputer.net()));
}

TEST_CASE("fine-tuning lowers the supervised loss on frozen-policy episodes") {
  JointConfig cfg = default_config("sin-single");
  cfg.imputer_hidden = {32, 32};
  cfg.actor_hidden = {16};
  cfg.critic_hidden = {8};
  cfg.pretrain_epochs = 3;
  cfg.finetune_iterations = 40;
  cfg.batch_size = 32;
  auto split = gen_sinusoid_dataset(SinusoidMode::single, 5, 512, 4);
  Rng mask_rng(1);
  const auto data =
      mask_dataset(split.train, MaskDistributionSpec::from_missing_rate(100, cfg.missing_rate), mask_rng).missing;
  const auto imputer = pretrain_imputer(cfg, data, 3);
  const auto policy = init_policy(cfg, 100, 3);
  std::vector<double> deltas;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    cfg.seed = seed;
    const auto tuned = finetune_after(policy, imputer, data, cfg);
    // Frozen-policy episodes on complete data generated from the training rows.
    Rng rng(100 + seed);
    const Mat xbar = generate_complete_batch(imputer, data.rows, rng);
    std::vector<Vec> src;
    for (Eigen::Index c = 0; c < xbar.cols(); ++c) src.emplace_back(xbar.col(c));
    const auto eps = run_episodes(policy, src, horizon_for(100, cfg.missing_rate), {}, rng);
    std::vector<MissingState> terms;
    for (const auto& e : eps) terms.push_back(e.terminal);
    Rng a(7), b(7);
    const double before = loss_supervised(imputer, terms, src, cfg.loss_config(), a).loss;
    const double after = loss_supervised(tuned, terms, src, cfg.loss_config(), b).loss;
    deltas.push_back(after - before);
  }
  std::sort(deltas.begin(), deltas.end());
  CHECK(deltas[1] <= 0.0);
}

TEST_CASE("non-finite rewards abort with the iteration index") {
  Fixture f;
  auto broken = f.imputer;
  broken.net().mutable_params()[broken.net().num_params() - 1] = std::nan("");
  try {
    joint_train(f.cfg, f.data, f.policy, broken);
    FAIL("expected TrainingDivergedError");
  } catch (const TrainingDivergedError& e) {
    CHECK(std::string(e.what()).find("iteration 0") != std::string::npos);
  }
}

TEST_CASE("run csv is reproducible under a fixed seed") {
  Fixture f;
  testutil::TempDir dir("run");
  joint_train(f.cfg, f.data, f.policy, f.imputer).record.write_csv(dir / "a.csv");
  joint_train(f.cfg, f.data, f.policy, f.imputer).record.write_csv(dir / "b.csv");
  const auto a = slurp(dir / "a.csv");
  CHECK(a == slurp(dir / "b.csv"));
  CHECK(a.rfind("#schema=run/1\n", 0) == 0);
  CHECK(a.find("#checksum.imputer=") != std::string::npos);
}

TEST_CASE("run csv leaves the meta reward blank when it is absent") {
  RunRecord rec;
  RunRow r;
  r.iteration = 3;
  r.reward_e1 = -0.5;
  rec.append(r);
  testutil::TempDir dir("run");
  rec.write_csv(dir / "r.csv");
  CHECK(slurp(dir / "r.csv").find("\n3,-0.5,,0,0,0,0\n") != std::string::npos);
}

TEST_CASE("early stopping ends a run whose reward has plateaued") {
  Fixture f;
  f.cfg.outer_iterations = 40;
  f.cfg.beta = f.cfg.beta_prime = 0.0;
  f.cfg.alpha = f.cfg.alpha_prime = 0.0;
  f.cfg.early_stop_window = 3;
  f.cfg.early_stop_patience = 5;
  f.cfg.early_stop_tolerance = 1.0;  // nothing counts as progress
  const auto res = joint_train(f.cfg, f.data, f.policy, f.imputer);
  CHECK(res.record.rows().size() < 40);
}

TEST_CASE("uninformative order is a uniform prefix without repeats") {
  Rng rng(1);
  const auto full = uninform_order(10, 10, rng);
  auto sorted = full;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(sorted[i] == i);
  CHECK_THROWS_AS(uninform_order(5, 6, rng), std::invalid_argument);

  const int n = 20000;
  std::vector<int> hits(12, 0);
  for (int i = 0; i < n; ++i)
    for (auto a : uninform_order(12, 3, rng)) ++hits[a];
  // Each coordinate is included with probability T/D = 1/4.
  const double sd = std::sqrt(n * 0.25 * 0.75);
  for (int h : hits) CHECK(std::abs(h - n * 0.25) < 3.5 * sd);
}

TEST_CASE("uninformative episodes match the mcar marginals") {
  Rng rng(2);
  const int n = 20000;
  std::vector<int> hits(8, 0), mcar(8, 0);
  for (int i = 0; i < n; ++i) {
    const auto ep = baseline_uninform(Vec::Zero(8), 2, rng);
    const auto m = sample_mcar_mask(8, 2, rng);
    for (std::size_t j = 0; j < 8; ++j) {
      hits[j] += ep.terminal.mask.observed(j);
      mcar[j] += m.observed(j);
    }
  }
  const double sd = std::sqrt(2.0 * n * 0.25 * 0.75);
  for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(hits[j] - mcar[j]) < 4 * sd);
}

TEST_CASE("explicit choice picks the most uncertain coordinate") {
  auto m = Mask(5);
  const std::vector<Vec> c{vec({1, 2, 3, 4, 5}), vec({1, 2, 3, 9, 5})};
  CHECK(explicit_choice(c, m) == 3);
  const std::vector<Vec> same{vec({1, 2, 3}), vec({1, 2, 3}), vec({1, 2, 3})};
  CHECK(explicit_choice(same, Mask(3)) == 0);
  m.observe(3);
  CHECK(explicit_choice(c, m) == 0);
  const std::vector<Vec> one{vec({1})};
  CHECK_THROWS_AS(explicit_choice(one, Mask(1)), std::invalid_argument);
}

TEST_CASE("explicit baseline with a deterministic imputer measures in index order") {
  const std::size_t d = 6;
  std::vector<double> p((2 * d + 1) * d, 0.0);
  p.insert(p.end(), d, 0.5);
  const ImputerModel flat(DenseNet({2 * d + 1, d}, {Activation::identity}, {}, p), d, 1, false);
  Rng rng(3);
  const auto ep = baseline_explicit(flat, Vec::LinSpaced(6, 0, 1), 4, 3, rng);
  for (std::size_t t = 0; t < 4; ++t) CHECK(ep.steps[t].action == t);
  CHECK_THROWS_AS(baseline_explicit(flat, Vec::Zero(6), 2, 1, rng), std::invalid_argument);
}

TEST_CASE("explicit baseline never measures twice") {
  Fixture f;
  Rng rng(4);
  std::vector<Vec> src;
  for (int i = 0; i < 10; ++i) src.push_back(testutil::randn(100, rng));
  for (const auto& ep : baseline_explicit(f.imputer, src, 10, 3, rng)) {
    std::vector<std::size_t> a;
    for (const auto& s : ep.steps) {
      CHECK_FALSE(s.state.mask.observed(s.action));
      a.push_back(s.action);
    }
    std::sort(a.begin(), a.end());
    CHECK(std::adjacent_find(a.begin(), a.end()) == a.end());
  }
}

TEST_CASE("ablation names") {
  CHECK(parse_ablation("no-meta") == Ablation::no_meta);
  CHECK(std::string(to_string(Ablation::no_adaptation)) == "no-adaptation");
  CHECK_THROWS_AS(parse_ablation("none"), std::invalid_argument);
}
