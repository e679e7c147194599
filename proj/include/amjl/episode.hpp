#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "amjl/episode_types.hpp"
#include "amjl/imputer.hpp"
#include "amjl/policy.hpp"

namespace amjl {

enum class RolloutMode { explore, stochastic, greedy };

struct RolloutSpec {
  RolloutMode mode = RolloutMode::stochastic;
  double explore = 0.0;                     // used by RolloutMode::explore
  DropoutMode dropout = DropoutMode::train;  // ignored for greedy rollouts
};

/// Generated complete data: one imputation of the missing example.
Vec generate_complete(const ImputerModel& imputer, const MissingState& x_m, Rng& rng);
Mat generate_complete_batch(const ImputerModel& imputer, std::span<const MissingState> batch, Rng& rng);

/// Starts fully unobserved and measures `horizon` distinct coordinates of `source`.
Episode run_episode(const PolicyModel& policy, const Vec& source, std::size_t horizon, const RolloutSpec& spec,
                    Rng& rng);
/// Rolls all episodes in lockstep (one actor pass per step for the whole batch).
std::vector<Episode> run_episodes(const PolicyModel& policy, std::span<const Vec> sources, std::size_t horizon,
                                  const RolloutSpec& spec, Rng& rng);

/// Builds an episode from a fixed measurement order (no policy involved).
Episode episode_from_order(const Vec& source, std::span<const std::size_t> order);

struct RewardConfig {
  std::size_t k = 3;
};

/// min_j sqrt(mean_i (candidate_j[i] - truth[i])^2)
double topk_rmse(std::span<const Vec> candidates, const Vec& truth);
double rmse(const Vec& a, const Vec& b);

/// -R_k for the terminal state against the episode's source.
double terminal_reward(const ImputerModel& imputer, const Episode& episode, const RewardConfig& cfg, Rng& rng);
std::vector<double> terminal_rewards(const ImputerModel& imputer, std::span<const Episode> episodes,
                                     const RewardConfig& cfg, Rng& rng);

/// round(D (1 - missing_rate)), at least 1.
std::size_t horizon_for(std::size_t dim, double missing_rate);

/// CSV rows (episode_id, t, action, reward_at_terminal).
void write_episode_trace(const std::filesystem::path& path, std::span<const Episode> episodes,
                         std::span<const double> rewards);

}  // namespace amjl
