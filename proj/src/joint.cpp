#include "amjl/joint.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "amjl/checkpoint.hpp"

namespace amjl {

const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_meta: return "no-meta";
    case Ablation::no_adaptation: return "no-adaptation";
  }
  return "?";
}

Ablation parse_ablation(const std::string& s) {
  if (s == "full") return Ablation::full;
  if (s == "no-meta" || s == "no_meta") return Ablation::no_meta;
  if (s == "no-adaptation" || s == "no_adaptation") return Ablation::no_adaptation;
  throw std::invalid_argument("unknown ablation '" + s + "' (expected full, no-meta, no-adaptation)");
}

void JointConfig::validate() const {
  if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw std::invalid_argument("missing_rate must lie in [0, 1)");
  for (double r : {alpha, alpha_prime, beta, beta_prime, critic_lr, pretrain_lr})
    if (!(r >= 0.0)) throw std::invalid_argument("learning rates must be >= 0");
  if (!(explore >= 0.0 && explore <= 0.5)) throw std::invalid_argument("explore must lie in [0, 0.5]");
  if (k_reward == 0 || batch_size == 0 || eval_k == 0) throw std::invalid_argument("k_reward, batch_size, eval_k must be >= 1");
  if (explicit_k < 2) throw std::invalid_argument("explicit_k must be >= 2");
  if (!(actor_dropout >= 0.0 && actor_dropout < 1.0)) throw std::invalid_argument("actor_dropout must lie in [0, 1)");
  loss_config().validate();
}

ImputerSpec JointConfig::imputer_spec(std::size_t dim) const {
  ImputerSpec s;
  s.dim = dim;
  s.noise_dim = noise_dim;
  s.hidden = imputer_hidden;
  s.hidden_activation = imputer_activation;
  s.output_activation = imputer_output;
  s.interpolation = interpolation;
  return s;
}

PolicySpec JointConfig::policy_spec(std::size_t dim) const {
  PolicySpec s;
  s.dim = dim;
  s.actor_hidden = actor_hidden;
  s.critic_hidden = critic_hidden;
  s.dropout = actor_dropout;
  return s;
}

ImputerLossConfig JointConfig::loss_config() const {
  ImputerLossConfig c;
  c.self_mask_fraction = self_mask_fraction;
  c.smoothness_weight = smoothness_weight;
  c.gaussian_sigma = gaussian_sigma;
  c.k_multiple = k_multiple;
  return c;
}

PretrainConfig JointConfig::pretrain_config() const {
  PretrainConfig p;
  p.epochs = pretrain_epochs;
  p.batch_size = pretrain_batch_size;
  p.optimizer.learning_rate = pretrain_lr;
  p.loss = loss_config();
  return p;
}

JointConfig default_config(const std::string& dataset) {
  JointConfig c;
  c.dataset = dataset;
  if (dataset == "sin-single" || dataset == "sin-double") {
    c.missing_rate = 0.9;
    c.interpolation = true;
    c.imputer_output = Activation::identity;
    c.smoothness_weight = 0.1;
    c.k_multiple = 1;
  } else if (dataset == "mnist12") {
    c.missing_rate = 0.85;
    c.interpolation = false;
    c.imputer_output = Activation::sigmoid;
    c.imputer_hidden = {256, 256};
    c.noise_dim = 16;
    c.smoothness_weight = 0.0;
    c.k_multiple = 3;
    c.outer_iterations = 600;
  } else {
    throw std::invalid_argument("unknown dataset '" + dataset + "' (expected sin-single, sin-double, mnist12)");
  }
  return c;
}

std::uint64_t model_checksum(const Checkpoint& ckpt) {
  std::uint64_t h = 1469598103934665603ULL;
  for (auto b : encode_checkpoint(ckpt)) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

void RunRecord::write_csv(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  f << "#schema=run/1\n";
  f << "iteration,reward_e1,reward_e2,loss_unsup,loss_sup,actor_surrogate,critic_loss\n";
  char buf[32];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& r : rows_) {
    f << r.iteration << ',' << num(r.reward_e1) << ',' << (r.reward_e2 ? num(*r.reward_e2) : std::string()) << ','
      << num(r.loss_unsup) << ',' << num(r.loss_sup) << ',' << num(r.actor_surrogate) << ',' << num(r.critic_loss)
      << '\n';
  }
  f << "#seed=" << seed << '\n';
  for (const auto& [name, sum] : checksums) {
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(sum));
    f << "#checksum." << name << '=' << buf << '\n';
  }
}

Rng joint_stream(std::uint64_t seed, std::size_t iteration, JointPhase phase) {
  return make_stream(seed, iteration, static_cast<std::uint64_t>(phase));
}

std::vector<std::size_t> sample_batch_indices(std::size_t n, std::size_t batch, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t m = std::min(n, batch);
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(m);
  return idx;
}

namespace {

constexpr std::uint64_t kFinetuneTag = 0x66696e65ULL;

std::vector<Vec> columns(const Mat& m) {
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) out.emplace_back(m.col(c));
  return out;
}

std::vector<MissingState> terminals(const std::vector<Episode>& eps) {
  std::vector<MissingState> out;
  out.reserve(eps.size());
  for (const auto& e : eps) out.push_back(e.terminal);
  return out;
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void require_finite(double v, std::size_t iteration, const char* what) {
  if (!std::isfinite(v))
    throw TrainingDivergedError(std::string(what) + " is not finite at iteration " + std::to_string(iteration));
}

}  // namespace

JointResult joint_train(const JointConfig& cfg, const MissingDataset& data, PolicyModel policy,
                        ImputerModel imputer, const JointHooks& hooks) {
  cfg.validate();
  if (data.rows.empty()) throw std::invalid_argument("joint_train: empty dataset");
  if (policy.dim() != data.dim || imputer.dim() != data.dim)
    throw DimensionError("joint_train: model and data dimensions differ");
  const std::size_t horizon = horizon_for(data.dim, cfg.missing_rate);
  const bool meta = cfg.ablation == Ablation::full;
  const bool adapt = cfg.ablation != Ablation::no_adaptation;
  const ImputerLossConfig loss_cfg = cfg.loss_config();
  const RewardConfig reward_cfg{cfg.k_reward};
  const ReinforceConfig rcfg = cfg.reinforce_config();

  OptimizerConfig actor_oc;
  actor_oc.learning_rate = cfg.beta;
  OptimizerConfig critic_oc;
  critic_oc.learning_rate = cfg.critic_lr;
  OptimizerConfig imputer_oc;
  imputer_oc.learning_rate = std::max(cfg.alpha, cfg.alpha_prime);
  Optimizer actor_opt(actor_oc, policy.actor.num_params());
  Optimizer critic_opt(critic_oc, policy.critic.num_params());
  Optimizer imputer_opt(imputer_oc, imputer.net().num_params());

  JointResult result{std::move(policy), std::move(imputer), {}};
  auto& pi = result.policy;
  auto& phi = result.imputer;
  result.record.seed = cfg.seed;

  const RolloutSpec explore_spec{RolloutMode::explore, cfg.explore, DropoutMode::train};
  const RolloutSpec plain_spec{RolloutMode::stochastic, 0.0, DropoutMode::train};

  std::deque<double> window;
  double window_sum = 0.0;
  double best_avg = -std::numeric_limits<double>::infinity();
  std::size_t best_iter = 0;

  for (std::size_t it = 0; it < cfg.outer_iterations; ++it) {
    auto stream = [&](JointPhase p) { return joint_stream(cfg.seed, it, p); };
    RunRow row;
    row.iteration = it;

    // (1) real batch and generated complete data
    Rng batch_rng = stream(JointPhase::batch);
    const auto idx = sample_batch_indices(data.size(), cfg.batch_size, batch_rng);
    std::vector<MissingState> batch;
    batch.reserve(idx.size());
    for (auto i : idx) batch.push_back(data.rows[i]);
    Rng gen_rng = stream(JointPhase::generate);
    const auto xbar = columns(generate_complete_batch(phi, batch, gen_rng));

    // (2) exploring episodes E1, rewarded by the current imputer
    Rng e1_rng = stream(JointPhase::explore);
    const auto e1 = run_episodes(pi, xbar, horizon, explore_spec, e1_rng);
    Rng r1_rng = stream(JointPhase::reward_e1);
    const auto r1 = terminal_rewards(phi, e1, reward_cfg, r1_rng);
    row.reward_e1 = mean(r1);
    require_finite(row.reward_e1, it, "E1 reward");

    // (3)-(4) hypothetical adaptation and episodes E2 rewarded by it
    std::vector<Episode> e2;
    std::vector<double> r2;
    if (meta) {
      Rng h_rng = stream(JointPhase::hypothetical);
      const auto t1 = terminals(e1);
      auto hyp = adapt_step(phi, imputer_opt, batch, t1, xbar, cfg.alpha, cfg.alpha_prime, loss_cfg, h_rng);
      ImputerModel phi_new = hooks.hypothetical_adapt ? hooks.hypothetical_adapt(phi, hyp.model) : std::move(hyp.model);
      Rng e2_rng = stream(JointPhase::roll_e2);
      e2 = run_episodes(pi, xbar, horizon, plain_spec, e2_rng);
      Rng r2_rng = stream(JointPhase::reward_e2);
      r2 = terminal_rewards(phi_new, e2, reward_cfg, r2_rng);
      row.reward_e2 = mean(r2);
      require_finite(*row.reward_e2, it, "E2 reward");
    }

    // (5) two-term policy update
    std::vector<PolicyTerm> terms{{e1, r1, cfg.beta}};
    if (meta) terms.push_back({e2, r2, cfg.beta_prime});
    const auto diag = reinforce_update(pi, actor_opt, critic_opt, terms, rcfg);
    row.actor_surrogate = diag.actor_surrogate;
    row.critic_loss = diag.critic_loss;

    // (6)-(7) episodes E3 from the updated policy drive the actual imputer update
    if (adapt) {
      Rng e3_rng = stream(JointPhase::roll_e3);
      const auto e3 = run_episodes(pi, xbar, horizon, plain_spec, e3_rng);
      Rng a_rng = stream(JointPhase::adapt);
      const auto t3 = terminals(e3);
      auto upd = adapt_step(phi, imputer_opt, batch, t3, xbar, cfg.alpha, cfg.alpha_prime, loss_cfg, a_rng);
      phi = std::move(upd.model);
      imputer_opt = std::move(upd.optimizer);
      row.loss_unsup = upd.unsupervised.loss;
      row.loss_sup = upd.supervised.loss;
    }
    require_finite(row.loss_unsup + row.loss_sup + row.actor_surrogate + row.critic_loss, it, "training loss");

    result.record.append(row);
    if (hooks.on_iteration) hooks.on_iteration(row);

    if (cfg.early_stop_patience > 0 && cfg.early_stop_window > 0) {
      window.push_back(row.reward_e1);
      window_sum += row.reward_e1;
      if (window.size() > cfg.early_stop_window) {
        window_sum -= window.front();
        window.pop_front();
      }
      if (window.size() == cfg.early_stop_window) {
        const double avg = window_sum / static_cast<double>(window.size());
        if (avg > best_avg + cfg.early_stop_tolerance) {
          best_avg = avg;
          best_iter = it;
        } else if (it - best_iter >= cfg.early_stop_patience) {
          break;
        }
      }
    }
  }

  if (cfg.ablation == Ablation::no_adaptation) phi = finetune_after(pi, std::move(phi), data, cfg);

  result.record.checksums["actor"] = model_checksum(pi.actor_checkpoint());
  result.record.checksums["critic"] = model_checksum(pi.critic_checkpoint());
  result.record.checksums["imputer"] = model_checksum(phi.to_checkpoint());
  return result;
}

ImputerModel finetune_after(const PolicyModel& policy, ImputerModel imputer, const MissingDataset& data,
                            const JointConfig& cfg) {
  if (cfg.finetune_iterations == 0) return imputer;
  if (data.rows.empty()) throw std::invalid_argument("finetune_after: empty dataset");
  const std::size_t horizon = horizon_for(data.dim, cfg.missing_rate);
  const ImputerLossConfig loss_cfg = cfg.loss_config();
  OptimizerConfig oc;
  oc.learning_rate = std::max(cfg.alpha, cfg.alpha_prime);
  Optimizer opt(oc, imputer.net().num_params());
  const RolloutSpec spec{RolloutMode::stochastic, 0.0, DropoutMode::train};
  const std::uint64_t seed = mix64(cfg.seed ^ kFinetuneTag);
  for (std::size_t it = 0; it < cfg.finetune_iterations; ++it) {
    Rng batch_rng = joint_stream(seed, it, JointPhase::batch);
    const auto idx = sample_batch_indices(data.size(), cfg.batch_size, batch_rng);
    std::vector<MissingState> batch;
    for (auto i : idx) batch.push_back(data.rows[i]);
    Rng gen_rng = joint_stream(seed, it, JointPhase::generate);
    const auto xbar = columns(generate_complete_batch(imputer, batch, gen_rng));
    Rng roll_rng = joint_stream(seed, it, JointPhase::roll_e3);
    const auto eps = run_episodes(policy, xbar, horizon, spec, roll_rng);
    Rng a_rng = joint_stream(seed, it, JointPhase::adapt);
    auto upd = adapt_step(imputer, opt, batch, terminals(eps), xbar, cfg.alpha, cfg.alpha_prime, loss_cfg, a_rng);
    imputer = std::move(upd.model);
    opt = std::move(upd.optimizer);
  }
  return imputer;
}

std::vector<std::size_t> uninform_order(std::size_t dim, std::size_t horizon, Rng& rng) {
  if (horizon > dim) throw std::invalid_argument("uninform_order: horizon exceeds dimension");
  std::vector<std::size_t> idx(dim);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < horizon; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, dim - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(horizon);
  return idx;
}

Episode baseline_uninform(const Vec& source, std::size_t horizon, Rng& rng) {
  const auto order = uninform_order(static_cast<std::size_t>(source.size()), horizon, rng);
  return episode_from_order(source, order);
}

std::size_t explicit_choice(std::span<const Vec> candidates, const Mask& mask) {
  if (candidates.size() < 2) throw std::invalid_argument("explicit_choice: need at least two candidates");
  if (mask.unobserved_count() == 0) throw NoLegalActionError("state is fully observed; no legal action");
  const auto d = static_cast<Eigen::Index>(mask.size());
  Vec mu = Vec::Zero(d);
  for (const auto& c : candidates) mu += c;
  mu /= static_cast<double>(candidates.size());
  Vec var = Vec::Zero(d);
  for (const auto& c : candidates) var += (c - mu).cwiseAbs2();
  var /= static_cast<double>(candidates.size() - 1);
  return masked_argmax(var, mask);
}

std::vector<Episode> baseline_explicit(const ImputerModel& imputer, std::span<const Vec> sources,
                                       std::size_t horizon, std::size_t k, Rng& rng) {
  if (k < 2) throw std::invalid_argument("baseline_explicit: k must be >= 2");
  const std::size_t d = imputer.dim();
  if (horizon < 1 || horizon > d) throw std::invalid_argument("baseline_explicit: horizon outside [1, D]");
  std::vector<Episode> eps(sources.size());
  for (std::size_t b = 0; b < sources.size(); ++b) {
    eps[b].source = sources[b];
    eps[b].terminal = MissingState::unobserved(d);
  }
  std::vector<MissingState> states;
  std::vector<Vec> cands(k);
  for (std::size_t t = 0; t < horizon; ++t) {
    states.clear();
    for (const auto& ep : eps)
      for (std::size_t j = 0; j < k; ++j) states.push_back(ep.terminal);
    const Mat y = impute_batch(imputer, states, rng);
    for (std::size_t b = 0; b < eps.size(); ++b) {
      auto& ep = eps[b];
      for (std::size_t j = 0; j < k; ++j) cands[j] = y.col(static_cast<Eigen::Index>(b * k + j));
      EpisodeStep step;
      step.state = ep.terminal;
      step.action = explicit_choice(cands, ep.terminal.mask);
      ep.terminal.reveal(step.action, ep.source[static_cast<Eigen::Index>(step.action)]);
      ep.steps.push_back(std::move(step));
    }
  }
  return eps;
}

Episode baseline_explicit(const ImputerModel& imputer, const Vec& source, std::size_t horizon, std::size_t k,
                          Rng& rng) {
  return std::move(baseline_explicit(imputer, std::span<const Vec>(&source, 1), horizon, k, rng).front());
}

}  // namespace amjl
