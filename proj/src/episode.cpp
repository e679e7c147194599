#include "amjl/episode.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace amjl {

Vec generate_complete(const ImputerModel& imputer, const MissingState& x_m, Rng& rng) {
  return impute_sample(imputer, x_m, rng);
}

Mat generate_complete_batch(const ImputerModel& imputer, std::span<const MissingState> batch, Rng& rng) {
  return impute_batch(imputer, batch, rng);
}

std::vector<Episode> run_episodes(const PolicyModel& policy, std::span<const Vec> sources, std::size_t horizon,
                                  const RolloutSpec& spec, Rng& rng) {
  const std::size_t d = policy.dim();
  if (horizon < 1 || horizon > d)
    throw std::invalid_argument("horizon " + std::to_string(horizon) + " outside [1, " + std::to_string(d) + "]");
  const std::size_t batch = sources.size();
  std::vector<Episode> eps(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    if (static_cast<std::size_t>(sources[b].size()) != d) throw DimensionError("run_episodes: source length mismatch");
    eps[b].source = sources[b];
    eps[b].terminal = MissingState::unobserved(d);
    eps[b].steps.reserve(horizon);
  }
  if (batch == 0) return eps;
  const bool greedy = spec.mode == RolloutMode::greedy;
  const DropoutMode dmode = greedy ? DropoutMode::eval : spec.dropout;
  const double e = spec.mode == RolloutMode::explore ? spec.explore : 0.0;
  if (!(e >= 0.0 && e <= 0.5)) throw std::invalid_argument("exploration level must lie in [0, 0.5]");

  Mat in(static_cast<Eigen::Index>(2 * d), static_cast<Eigen::Index>(batch));
  for (std::size_t t = 0; t < horizon; ++t) {
    for (std::size_t b = 0; b < batch; ++b) encode_state_into(eps[b].terminal, in.col(static_cast<Eigen::Index>(b)));
    auto fwd = policy.actor.forward(in, dmode, rng);
    for (std::size_t b = 0; b < batch; ++b) {
      auto& ep = eps[b];
      const auto col = static_cast<Eigen::Index>(b);
      const Vec scores = fwd.output.col(col);
      EpisodeStep step;
      step.state = ep.terminal;
      step.explore = e;
      if (greedy) {
        step.action = masked_argmax(scores, ep.terminal.mask);
        step.log_prob = std::log(masked_softmax(scores, ep.terminal.mask).probs[static_cast<Eigen::Index>(step.action)]);
      } else {
        const auto dist = flatten_explore(masked_softmax(scores, ep.terminal.mask), e);
        step.action = sample_action(dist, rng);
        step.log_prob = std::log(dist.probs[static_cast<Eigen::Index>(step.action)]);
        step.dropout_masks.resize(policy.actor.num_layers());
        for (std::size_t l = 0; l < policy.actor.num_layers(); ++l)
          if (fwd.tape.dropout_masks[l].size() != 0) step.dropout_masks[l] = fwd.tape.dropout_masks[l].col(col);
      }
      ep.terminal.reveal(step.action, ep.source[static_cast<Eigen::Index>(step.action)]);
      ep.steps.push_back(std::move(step));
    }
  }
  return eps;
}

Episode run_episode(const PolicyModel& policy, const Vec& source, std::size_t horizon, const RolloutSpec& spec,
                    Rng& rng) {
  return std::move(run_episodes(policy, std::span<const Vec>(&source, 1), horizon, spec, rng).front());
}

Episode episode_from_order(const Vec& source, std::span<const std::size_t> order) {
  const auto d = static_cast<std::size_t>(source.size());
  Episode ep;
  ep.source = source;
  ep.terminal = MissingState::unobserved(d);
  for (auto a : order) {
    if (a >= d) throw std::out_of_range("episode_from_order: coordinate out of range");
    if (ep.terminal.mask.observed(a)) throw std::invalid_argument("episode_from_order: repeated coordinate");
    EpisodeStep step;
    step.state = ep.terminal;
    step.action = a;
    step.log_prob = -std::log(static_cast<double>(ep.terminal.mask.unobserved_count()));
    ep.terminal.reveal(a, source[static_cast<Eigen::Index>(a)]);
    ep.steps.push_back(std::move(step));
  }
  return ep;
}

double rmse(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw DimensionError("rmse: length mismatch");
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

double topk_rmse(std::span<const Vec> candidates, const Vec& truth) {
  if (candidates.empty()) throw std::invalid_argument("topk_rmse: no candidates");
  double best = rmse(candidates.front(), truth);
  for (std::size_t j = 1; j < candidates.size(); ++j) best = std::min(best, rmse(candidates[j], truth));
  return best;
}

std::vector<double> terminal_rewards(const ImputerModel& imputer, std::span<const Episode> episodes,
                                     const RewardConfig& cfg, Rng& rng) {
  if (cfg.k == 0) throw std::invalid_argument("reward k must be >= 1");
  std::vector<MissingState> states;
  states.reserve(episodes.size() * cfg.k);
  for (const auto& ep : episodes)
    for (std::size_t j = 0; j < cfg.k; ++j) states.push_back(ep.terminal);
  const Mat y = impute_batch(imputer, states, rng);
  std::vector<double> rewards(episodes.size());
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    double best = 0.0;
    for (std::size_t j = 0; j < cfg.k; ++j) {
      const double r = std::sqrt((y.col(static_cast<Eigen::Index>(e * cfg.k + j)) - episodes[e].source).squaredNorm() /
                                 static_cast<double>(y.rows()));
      best = j == 0 ? r : std::min(best, r);
    }
    rewards[e] = -best;
  }
  return rewards;
}

double terminal_reward(const ImputerModel& imputer, const Episode& episode, const RewardConfig& cfg, Rng& rng) {
  return terminal_rewards(imputer, std::span<const Episode>(&episode, 1), cfg, rng).front();
}

std::size_t horizon_for(std::size_t dim, double missing_rate) {
  if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw std::invalid_argument("missing rate must lie in [0, 1)");
  const auto t = static_cast<std::size_t>(std::lround(static_cast<double>(dim) * (1.0 - missing_rate)));
  return std::max<std::size_t>(1, t);
}

void write_episode_trace(const std::filesystem::path& path, std::span<const Episode> episodes,
                         std::span<const double> rewards) {
  if (rewards.size() != episodes.size()) throw DimensionError("write_episode_trace: one reward per episode");
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  f << "#schema=episodes/1\nepisode_id,t,action,reward_at_terminal\n";
  char buf[32];
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%.17g", rewards[e]);
    for (std::size_t t = 0; t < episodes[e].steps.size(); ++t)
      f << e << ',' << t + 1 << ',' << episodes[e].steps[t].action << ',' << buf << '\n';
  }
}

}  // namespace amjl
