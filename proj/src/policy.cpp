#include "amjl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace amjl {

PolicyModel::PolicyModel(const PolicySpec& spec, Rng& rng) {
  if (spec.dim == 0) throw DimensionError("policy dimension must be positive");
  std::vector<std::size_t> dims{2 * spec.dim};
  dims.insert(dims.end(), spec.actor_hidden.begin(), spec.actor_hidden.end());
  dims.push_back(spec.dim);
  std::vector<double> dropout(dims.size() - 1, spec.dropout);
  dropout.front() = 0.0;
  actor = DenseNet(dims, spec.hidden_activation, Activation::identity, dropout, rng);

  std::vector<std::size_t> cdims{2 * spec.dim};
  cdims.insert(cdims.end(), spec.critic_hidden.begin(), spec.critic_hidden.end());
  cdims.push_back(1);
  critic = DenseNet(cdims, spec.hidden_activation, Activation::identity, {}, rng);
}

PolicyModel::PolicyModel(DenseNet actor_net, DenseNet critic_net)
    : actor(std::move(actor_net)), critic(std::move(critic_net)) {
  if (actor.input_dim() != 2 * actor.output_dim())
    throw DimensionError("actor must map 2D inputs to D scores");
  if (critic.input_dim() != actor.input_dim() || critic.output_dim() != 1)
    throw DimensionError("critic must map the actor's input to a scalar");
}

Checkpoint PolicyModel::actor_checkpoint() const {
  return {ModelRole::actor, {static_cast<std::uint32_t>(dim())}, actor};
}

Checkpoint PolicyModel::critic_checkpoint() const {
  return {ModelRole::critic, {static_cast<std::uint32_t>(dim())}, critic};
}

PolicyModel PolicyModel::from_checkpoints(const Checkpoint& a, const Checkpoint& c) {
  if (a.role != ModelRole::actor) throw CheckpointError("expected an actor checkpoint");
  if (c.role != ModelRole::critic) throw CheckpointError("expected a critic checkpoint");
  return PolicyModel(a.net, c.net);
}

ActionDistribution masked_softmax(const Vec& scores, const Mask& mask) {
  const auto d = static_cast<std::size_t>(scores.size());
  if (mask.size() != d) throw DimensionError("masked_softmax: score/mask length mismatch");
  if (mask.unobserved_count() == 0) throw NoLegalActionError("state is fully observed; no legal action");
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < d; ++i)
    if (!mask.observed(i)) top = std::max(top, scores[static_cast<Eigen::Index>(i)]);
  ActionDistribution dist{Vec::Zero(scores.size()), mask};
  double total = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    if (mask.observed(i)) continue;
    const double w = std::exp(scores[static_cast<Eigen::Index>(i)] - top);
    dist.probs[static_cast<Eigen::Index>(i)] = w;
    total += w;
  }
  dist.probs /= total;
  return dist;
}

Vec actor_scores(const PolicyModel& model, const MissingState& x_m, DropoutMode mode, Rng& rng) {
  Mat in = encode_state(x_m);
  return model.actor.forward(in, mode, rng).output.col(0);
}

ActionDistribution action_distribution(const PolicyModel& model, const MissingState& x_m, DropoutMode mode,
                                       Rng& rng) {
  if (x_m.mask.unobserved_count() == 0) throw NoLegalActionError("state is fully observed; no legal action");
  return masked_softmax(actor_scores(model, x_m, mode, rng), x_m.mask);
}

ActionDistribution flatten_explore(const ActionDistribution& dist, double e) {
  if (!(e >= 0.0 && e <= 0.5)) throw std::invalid_argument("exploration level must lie in [0, 0.5]");
  if (e == 0.0) return dist;
  ActionDistribution out{Vec::Zero(dist.probs.size()), dist.mask};
  double total = 0.0;
  for (std::size_t i = 0; i < dist.mask.size(); ++i) {
    if (dist.mask.observed(i)) continue;
    const auto ii = static_cast<Eigen::Index>(i);
    const double u = (1.0 - e) * dist.probs[ii] + e * (1.0 - dist.probs[ii]);
    out.probs[ii] = u;
    total += u;
  }
  out.probs /= total;
  return out;
}

std::size_t sample_action(const ActionDistribution& dist, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  std::size_t last = dist.mask.size();
  for (std::size_t i = 0; i < dist.mask.size(); ++i) {
    if (dist.mask.observed(i)) continue;
    const double p = dist.probs[static_cast<Eigen::Index>(i)];
    if (p <= 0.0) continue;
    last = i;
    acc += p;
    if (u < acc) return i;
  }
  if (last == dist.mask.size()) throw NoLegalActionError("distribution has no mass on unobserved coordinates");
  return last;  // rounding left u just above the accumulated total
}

std::size_t masked_argmax(const Vec& scores, const Mask& mask) {
  if (mask.unobserved_count() == 0) throw NoLegalActionError("state is fully observed; no legal action");
  std::size_t best = mask.size();
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask.observed(i)) continue;
    const double s = scores[static_cast<Eigen::Index>(i)];
    if (best == mask.size() || s > best_score) {
      best = i;
      best_score = s;
    }
  }
  return best;
}

std::size_t greedy_action(const PolicyModel& model, const MissingState& x_m) {
  if (x_m.mask.unobserved_count() == 0) throw NoLegalActionError("state is fully observed; no legal action");
  return masked_argmax(model.actor.predict(encode_state(x_m)), x_m.mask);
}

double explore_log_prob(const Vec& scores, const Mask& mask, std::size_t action, double e) {
  const auto dist = flatten_explore(masked_softmax(scores, mask), e);
  return std::log(dist.probs[static_cast<Eigen::Index>(action)]);
}

namespace {

struct StackedSteps {
  Mat inputs;
  std::vector<Mat> masks;
  std::vector<const EpisodeStep*> steps;
};

StackedSteps stack_steps(const DenseNet& actor, std::span<const Episode> episodes) {
  StackedSteps s;
  for (const auto& ep : episodes)
    for (const auto& st : ep.steps) s.steps.push_back(&st);
  const auto n = static_cast<Eigen::Index>(s.steps.size());
  s.inputs.resize(static_cast<Eigen::Index>(actor.input_dim()), n);
  for (Eigen::Index c = 0; c < n; ++c) encode_state_into(s.steps[static_cast<std::size_t>(c)]->state, s.inputs.col(c));
  s.masks.resize(actor.num_layers());
  for (std::size_t l = 0; l < actor.num_layers(); ++l) {
    bool any = false;
    for (const auto* st : s.steps)
      if (l < st->dropout_masks.size() && st->dropout_masks[l].size() != 0) any = true;
    if (!any) continue;
    Mat m = Mat::Ones(static_cast<Eigen::Index>(actor.dims()[l]), n);
    for (Eigen::Index c = 0; c < n; ++c) {
      const auto* st = s.steps[static_cast<std::size_t>(c)];
      if (l < st->dropout_masks.size() && st->dropout_masks[l].size() != 0) m.col(c) = st->dropout_masks[l];
    }
    s.masks[l] = std::move(m);
  }
  return s;
}

}  // namespace

SurrogateResult policy_surrogate(const PolicyModel& model, std::span<const Episode> episodes,
                                 std::span<const double> advantages) {
  auto stacked = stack_steps(model.actor, episodes);
  SurrogateResult res;
  res.steps = stacked.steps.size();
  if (advantages.size() != res.steps) throw DimensionError("policy_surrogate: one advantage per step required");
  res.grad.assign(model.actor.num_params(), 0.0);
  if (res.steps == 0) return res;
  auto fwd = model.actor.forward(stacked.inputs, stacked.masks);
  Mat upstream = Mat::Zero(fwd.output.rows(), fwd.output.cols());
  const double inv_n = 1.0 / static_cast<double>(res.steps);
  double loss = 0.0;
  for (std::size_t c = 0; c < res.steps; ++c) {
    const auto& st = *stacked.steps[c];
    const Vec scores = fwd.output.col(static_cast<Eigen::Index>(c));
    const auto pi = masked_softmax(scores, st.state.mask);
    const auto a = static_cast<Eigen::Index>(st.action);
    const double e = st.explore;
    const double u_a = e + (1.0 - 2.0 * e) * pi.probs[a];
    const double norm = e * static_cast<double>(st.state.mask.unobserved_count()) + (1.0 - 2.0 * e);
    loss -= advantages[c] * std::log(u_a / norm) * inv_n;
    // d log pi_e(a) / d s_i = (1 - 2e) pi_a / u_a * (1[i = a] - pi_i) on unobserved i
    const double factor = (1.0 - 2.0 * e) * pi.probs[a] / u_a;
    const double coeff = -advantages[c] * inv_n * factor;
    for (std::size_t i = 0; i < st.state.dim(); ++i) {
      if (st.state.mask.observed(i)) continue;
      const auto ii = static_cast<Eigen::Index>(i);
      upstream(ii, static_cast<Eigen::Index>(c)) = coeff * ((ii == a ? 1.0 : 0.0) - pi.probs[ii]);
    }
  }
  res.loss = loss;
  res.grad = model.actor.backward(fwd.tape, upstream).params;
  return res;
}

std::vector<double> critic_values(const PolicyModel& model, std::span<const Episode> episodes) {
  std::size_t n = 0;
  for (const auto& ep : episodes) n += ep.steps.size();
  Mat in(static_cast<Eigen::Index>(model.critic.input_dim()), static_cast<Eigen::Index>(n));
  Eigen::Index c = 0;
  for (const auto& ep : episodes)
    for (const auto& st : ep.steps) encode_state_into(st.state, in.col(c++));
  const Mat v = model.critic.predict(in);
  return {v.data(), v.data() + v.size()};
}

ReinforceDiagnostics reinforce_update(PolicyModel& model, Optimizer& actor_opt, Optimizer& critic_opt,
                                      std::span<const PolicyTerm> terms, const ReinforceConfig& cfg) {
  ReinforceDiagnostics diag;
  std::vector<std::vector<double>> actor_grads;
  std::vector<double> weights;
  std::vector<WeightedGradient> weighted;

  // Critic data: steps of terms with positive weight.
  std::vector<const Episode*> critic_eps;
  std::vector<double> critic_targets;
  double reward_sum = 0.0;
  std::size_t reward_count = 0;
  double adv_sum = 0.0;

  for (const auto& term : terms) {
    if (term.episodes.size() != term.rewards.size())
      throw DimensionError("reinforce_update: " + std::to_string(term.episodes.size()) + " episodes but " +
                           std::to_string(term.rewards.size()) + " rewards");
    if (term.weight < 0.0) throw std::invalid_argument("reinforce_update: negative term weight");
    if (term.weight == 0.0) continue;
    const auto values = critic_values(model, term.episodes);
    std::vector<double> adv;
    adv.reserve(values.size());
    std::size_t k = 0;
    for (std::size_t e = 0; e < term.episodes.size(); ++e) {
      for (std::size_t t = 0; t < term.episodes[e].steps.size(); ++t) adv.push_back(term.rewards[e] - values[k++]);
    }
    if (cfg.normalize_advantage && adv.size() > 1) {
      double mean = 0.0, var = 0.0;
      for (double a : adv) mean += a;
      mean /= static_cast<double>(adv.size());
      for (double a : adv) var += (a - mean) * (a - mean);
      const double sd = std::sqrt(var / static_cast<double>(adv.size()));
      for (double& a : adv) a = (a - mean) / (sd + 1e-8);
    }
    auto sur = policy_surrogate(model, term.episodes, adv);
    diag.actor_surrogate += term.weight * sur.loss;
    for (std::size_t e = 0; e < term.episodes.size(); ++e) {
      critic_eps.push_back(&term.episodes[e]);
      critic_targets.push_back(term.rewards[e]);
      reward_sum += term.rewards[e];
      ++reward_count;
    }
    for (double a : adv) adv_sum += a;
    diag.steps += sur.steps;
    actor_grads.push_back(std::move(sur.grad));
    weights.push_back(term.weight);
  }
  for (std::size_t i = 0; i < actor_grads.size(); ++i) weighted.push_back({weights[i], actor_grads[i]});

  // Critic gradient on the pre-update parameters.
  std::vector<double> critic_grad(model.critic.num_params(), 0.0);
  std::size_t n = 0;
  for (const auto* ep : critic_eps) n += ep->steps.size();
  if (n > 0) {
    Mat in(static_cast<Eigen::Index>(model.critic.input_dim()), static_cast<Eigen::Index>(n));
    std::vector<double> target;
    target.reserve(n);
    Eigen::Index c = 0;
    for (std::size_t e = 0; e < critic_eps.size(); ++e) {
      for (const auto& st : critic_eps[e]->steps) {
        encode_state_into(st.state, in.col(c++));
        target.push_back(critic_targets[e]);
      }
    }
    Rng unused(0);
    auto fwd = model.critic.forward(in, DropoutMode::eval, unused);
    Mat up(1, static_cast<Eigen::Index>(n));
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = fwd.output(0, static_cast<Eigen::Index>(i)) - target[i];
      loss += 0.5 * diff * diff;
      up(0, static_cast<Eigen::Index>(i)) = diff / static_cast<double>(n);
    }
    diag.critic_loss = loss / static_cast<double>(n);
    critic_grad = model.critic.backward(fwd.tape, up).params;
  }

  apply_weighted(actor_opt, model.actor, weighted);
  if (n > 0 && cfg.critic_lr > 0.0) critic_opt.step(model.critic, critic_grad, cfg.critic_lr);

  diag.mean_reward = reward_count ? reward_sum / static_cast<double>(reward_count) : 0.0;
  diag.mean_advantage = diag.steps ? adv_sum / static_cast<double>(diag.steps) : 0.0;
  return diag;
}

ReinforceDiagnostics reinforce_update(PolicyModel& model, Optimizer& actor_opt, Optimizer& critic_opt,
                                      std::span<const Episode> episodes, std::span<const double> rewards,
                                      double beta, const ReinforceConfig& cfg) {
  const PolicyTerm term{episodes, rewards, beta};
  return reinforce_update(model, actor_opt, critic_opt, std::span<const PolicyTerm>(&term, 1), cfg);
}

}  // namespace amjl
