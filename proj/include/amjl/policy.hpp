#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "amjl/checkpoint.hpp"
#include "amjl/episode_types.hpp"
#include "amjl/missingness.hpp"
#include "amjl/nn.hpp"

namespace amjl {

/// Raised when a distribution is requested for a state with nothing left to measure.
class NoLegalActionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct PolicySpec {
  std::size_t dim = 0;
  std::vector<std::size_t> actor_hidden = {128, 128};
  std::vector<std::size_t> critic_hidden = {64, 64};
  Activation hidden_activation = Activation::tanh;
  double dropout = 0.1;  // on the inputs of every hidden-to-next layer of the actor
};

struct PolicyModel {
  DenseNet actor;   // encode_state (2D) -> scores (D)
  DenseNet critic;  // encode_state (2D) -> value

  PolicyModel() = default;
  PolicyModel(const PolicySpec& spec, Rng& rng);
  PolicyModel(DenseNet actor_net, DenseNet critic_net);

  std::size_t dim() const { return actor.output_dim(); }

  Checkpoint actor_checkpoint() const;
  Checkpoint critic_checkpoint() const;
  static PolicyModel from_checkpoints(const Checkpoint& actor, const Checkpoint& critic);
};

/// Categorical distribution over coordinates; zero mass where `mask` is 1.
struct ActionDistribution {
  Vec probs;
  Mask mask;
};

/// (1 - m) exp(s - max_unobserved s), normalized over the unobserved entries.
ActionDistribution masked_softmax(const Vec& scores, const Mask& mask);

/// Scores from the actor for one state; dropout only in train mode.
Vec actor_scores(const PolicyModel& model, const MissingState& x_m, DropoutMode mode, Rng& rng);

ActionDistribution action_distribution(const PolicyModel& model, const MissingState& x_m,
                                       DropoutMode mode, Rng& rng);

/// u_i = (1 - e) pi_i + e (1 - pi_i) over unobserved coordinates, renormalized.
/// e must lie in [0, 0.5].
ActionDistribution flatten_explore(const ActionDistribution& dist, double e);

std::size_t sample_action(const ActionDistribution& dist, Rng& rng);

/// Masked argmax of eval-mode scores; ties go to the lowest index.
std::size_t greedy_action(const PolicyModel& model, const MissingState& x_m);
std::size_t masked_argmax(const Vec& scores, const Mask& mask);

/// log pi_e(action) where pi_e is the flattened softmax of `scores`.
double explore_log_prob(const Vec& scores, const Mask& mask, std::size_t action, double e);

struct PolicyTerm {
  std::span<const Episode> episodes;
  std::span<const double> rewards;  // one terminal reward per episode
  double weight = 0.0;              // beta for this term
};

struct SurrogateResult {
  double loss = 0.0;  // -mean_t A_t log pi(a_t | s_t)
  std::vector<double> grad;
  std::size_t steps = 0;
};

/// Policy-gradient surrogate over every step of `episodes` with fixed
/// per-step advantages, replaying the dropout masks recorded in each step.
SurrogateResult policy_surrogate(const PolicyModel& model, std::span<const Episode> episodes,
                                 std::span<const double> advantages);

/// Critic values for every step of `episodes`, in step order.
std::vector<double> critic_values(const PolicyModel& model, std::span<const Episode> episodes);

struct ReinforceConfig {
  double critic_lr = 1e-3;
  bool normalize_advantage = false;
};

struct ReinforceDiagnostics {
  double actor_surrogate = 0.0;
  double critic_loss = 0.0;
  double mean_advantage = 0.0;
  double mean_reward = 0.0;
  std::size_t steps = 0;
};

/// Advantage A_t = R - V(s_t) with the terminal reward R for every step.
/// Actor: weighted descent on the surrogates of all terms. Critic: squared
/// error to R over the steps of terms with positive weight.
ReinforceDiagnostics reinforce_update(PolicyModel& model, Optimizer& actor_opt, Optimizer& critic_opt,
                                      std::span<const PolicyTerm> terms, const ReinforceConfig& cfg);

ReinforceDiagnostics reinforce_update(PolicyModel& model, Optimizer& actor_opt, Optimizer& critic_opt,
                                      std::span<const Episode> episodes, std::span<const double> rewards,
                                      double beta, const ReinforceConfig& cfg);

}  // namespace amjl
