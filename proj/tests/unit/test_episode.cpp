#include "doctest.h"

#include <cmath>
#include <fstream>
#include <set>

#include "amjl/episode.hpp"
#include "test_util.hpp"

using namespace amjl;
using testutil::vec;

namespace {

PolicyModel small_policy(std::size_t dim, std::uint64_t seed) {
  PolicySpec s;
  s.dim = dim;
  s.actor_hidden = {10};
  s.critic_hidden = {6};
  s.dropout = 0.2;
  Rng rng(seed);
  return PolicyModel(s, rng);
}

PolicyModel uniform_policy(std::size_t d) {
  DenseNet actor({2 * d, d}, {Activation::identity}, {}, std::vector<double>(2 * d * d + d, 0.0));
  DenseNet critic({2 * d, 1}, {Activation::identity}, {}, std::vector<double>(2 * d + 1, 0.0));
  return PolicyModel(actor, critic);
}

ImputerModel small_imputer(std::size_t dim, std::uint64_t seed) {
  ImputerSpec s;
  s.dim = dim;
  s.noise_dim = 2;
  s.hidden = {8};
  Rng rng(seed);
  return ImputerModel(s, rng);
}

void check_episode_invariants(const Episode& ep, std::size_t horizon) {
  CHECK(ep.steps.size() == horizon);
  std::set<std::size_t> seen;
  auto replay = MissingState::unobserved(ep.terminal.dim());
  for (std::size_t t = 0; t < ep.steps.size(); ++t) {
    const auto& st = ep.steps[t];
    CHECK(st.state.mask.observed_count() == t);
    CHECK(st.state.mask == replay.mask);
    CHECK_FALSE(st.state.mask.observed(st.action));
    CHECK(seen.insert(st.action).second);
    for (auto i : st.state.mask.observed_indices())
      CHECK(st.state.values[static_cast<Eigen::Index>(i)] == ep.source[static_cast<Eigen::Index>(i)]);
    replay.reveal(st.action, ep.source[static_cast<Eigen::Index>(st.action)]);
  }
  CHECK(ep.terminal.mask.observed_count() == horizon);
  CHECK(ep.terminal.mask == replay.mask);
  CHECK(ep.terminal.values == replay.values);
}

}  // namespace

TEST_CASE("generated complete data preserves observations") {
  const auto imp = small_imputer(5, 1);
  Rng rng(2);
  const auto full = MissingState::fully_observed(vec({1, 2, 3, 4, 5}));
  CHECK(generate_complete(imp, full, rng) == full.values);
  const auto part = MissingState::from(vec({1, 2, 3, 4, 5}), sample_mcar_mask(5, 2, rng));
  Rng a(4), b(4);
  const Vec x = generate_complete(imp, part, a);
  CHECK(x == generate_complete(imp, part, b));
  for (auto i : part.mask.observed_indices()) CHECK(x[static_cast<Eigen::Index>(i)] == part.values[static_cast<Eigen::Index>(i)]);
}

TEST_CASE("episodes never repeat a coordinate and stay consistent") {
  const auto p = small_policy(7, 3);
  Rng rng(5);
  std::vector<Vec> src;
  for (int i = 0; i < 200; ++i) src.push_back(testutil::randn(7, rng));
  for (auto mode : {RolloutMode::explore, RolloutMode::stochastic, RolloutMode::greedy}) {
    for (std::size_t h : {1, 4, 7}) {
      const auto eps = run_episodes(p, src, h, {mode, 0.3, DropoutMode::train}, rng);
      for (const auto& ep : eps) check_episode_invariants(ep, h);
    }
  }
}

TEST_CASE("full horizon observes the whole source") {
  const auto p = small_policy(6, 4);
  Rng rng(6);
  const Vec x = testutil::randn(6, rng);
  const auto ep = run_episode(p, x, 6, {}, rng);
  CHECK(ep.terminal.values == x);
  CHECK(ep.terminal.mask.unobserved_count() == 0);
}

TEST_CASE("horizon beyond the dimension is rejected") {
  const auto p = small_policy(4, 4);
  Rng rng(6);
  CHECK_THROWS_AS(run_episode(p, Vec::Zero(4), 5, {}, rng), std::invalid_argument);
  CHECK_THROWS_AS(run_episode(p, Vec::Zero(4), 0, {}, rng), std::invalid_argument);
}

TEST_CASE("uniform policy picks each first coordinate equally often") {
  const auto p = uniform_policy(4);
  Rng rng(7);
  const std::vector<Vec> src(1000, Vec::Zero(4));
  std::vector<int> hits(4, 0);
  for (int round = 0; round < 100; ++round)
    for (const auto& ep : run_episodes(p, src, 1, {}, rng)) ++hits[ep.steps[0].action];
  for (int h : hits) CHECK(std::abs(h / 1e5 - 0.25) < 0.01);
}

TEST_CASE("greedy rollouts repeat exactly") {
  const auto p = small_policy(8, 9);
  Rng a(1), b(2);
  const Vec x = Vec::LinSpaced(8, -1, 1);
  const auto e1 = run_episode(p, x, 5, {RolloutMode::greedy}, a);
  const auto e2 = run_episode(p, x, 5, {RolloutMode::greedy}, b);
  for (std::size_t t = 0; t < 5; ++t) CHECK(e1.steps[t].action == e2.steps[t].action);
}

TEST_CASE("batched rollout matches per-episode log-probabilities") {
  const auto p = small_policy(5, 10);
  Rng rng(11);
  std::vector<Vec> src{testutil::randn(5, rng), testutil::randn(5, rng)};
  const auto eps = run_episodes(p, src, 3, {RolloutMode::explore, 0.1, DropoutMode::train}, rng);
  for (const auto& ep : eps) {
    for (const auto& st : ep.steps) {
      const auto replay = p.actor.forward(encode_state(st.state), [&] {
        std::vector<Mat> m;
        for (const auto& v : st.dropout_masks) m.push_back(v.size() ? Mat(v) : Mat());
        return m;
      }());
      CHECK(st.log_prob == doctest::Approx(explore_log_prob(replay.output.col(0), st.state.mask, st.action, 0.1)).epsilon(1e-12));
    }
  }
}

TEST_CASE("rmse and top-k hand values") {
  const Vec truth = vec({1, 0});
  const std::vector<Vec> c{vec({0, 0}), vec({1, 0.5})};
  CHECK(topk_rmse(c, truth) == doctest::Approx(0.35355339059327373));
  CHECK(rmse(vec({0, 0}), truth) == doctest::Approx(std::sqrt(0.5)));
  const std::vector<Vec> exact{vec({3, 3}), truth};
  CHECK(topk_rmse(exact, truth) == 0.0);
}

TEST_CASE("top-k rmse does not increase with nested candidate sets") {
  Rng rng(12);
  const Vec truth = testutil::randn(10, rng);
  std::vector<Vec> c;
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= 8; ++k) {
    c.push_back(testutil::randn(10, rng));
    const double r = topk_rmse(c, truth);
    CHECK(r <= prev);
    prev = r;
  }
}

TEST_CASE("terminal reward is non-positive and zero on full observation") {
  const auto imp = small_imputer(6, 3);
  const auto p = small_policy(6, 3);
  Rng rng(13);
  const Vec x = testutil::randn(6, rng);
  for (std::size_t h = 1; h < 6; ++h) CHECK(terminal_reward(imp, run_episode(p, x, h, {}, rng), {3}, rng) <= 0.0);
  CHECK(terminal_reward(imp, run_episode(p, x, 6, {}, rng), {1}, rng) == 0.0);
}

TEST_CASE("terminal reward equals minus the best candidate rmse") {
  const auto imp = small_imputer(6, 3);
  Rng rng(14);
  const Vec x = testutil::randn(6, rng);
  const auto ep = episode_from_order(x, std::vector<std::size_t>{4, 1});
  Rng a(15), b(15);
  const double r = terminal_reward(imp, ep, {4}, a);
  const auto cands = impute_multiple(imp, ep.terminal, 4, b);
  CHECK(r == doctest::Approx(-topk_rmse(cands, x)).epsilon(1e-14));
}

TEST_CASE("horizon rounding") {
  CHECK(horizon_for(100, 0.9) == 10);
  CHECK(horizon_for(144, 0.85) == 22);
  CHECK(horizon_for(37, 0.0) == 37);
  CHECK(horizon_for(10, 0.99) == 1);
  CHECK_THROWS_AS(horizon_for(10, 1.0), std::invalid_argument);
}

TEST_CASE("episode trace file layout") {
  testutil::TempDir dir("trace");
  const std::vector<Episode> eps{episode_from_order(vec({1, 2, 3}), std::vector<std::size_t>{2, 0})};
  const std::vector<double> r{-0.25};
  write_episode_trace(dir / "e.csv", eps, r);
  std::ifstream f(dir / "e.csv");
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(f, line)) lines.push_back(line);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "#schema=episodes/1");
  CHECK(lines[1] == "episode_id,t,action,reward_at_terminal");
  CHECK(lines[2] == "0,1,2,-0.25");
  CHECK(lines[3] == "0,2,0,-0.25");
}
