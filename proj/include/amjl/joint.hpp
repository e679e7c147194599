#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amjl/episode.hpp"
#include "amjl/imputer.hpp"
#include "amjl/policy.hpp"

namespace amjl {

enum class Ablation { full, no_meta, no_adaptation };

const char* to_string(Ablation a);
Ablation parse_ablation(const std::string& s);

/// Every knob of a run. Field names double as config-file keys.
struct JointConfig {
  std::string dataset = "sin-single";
  double missing_rate = 0.9;

  // Algorithm hyperparameters.
  double alpha = 1e-3;
  double alpha_prime = 1e-3;
  double beta = 1e-3;
  double beta_prime = 1e-3;
  double explore = 0.1;
  std::size_t k_reward = 3;
  std::size_t batch_size = 64;
  std::size_t outer_iterations = 2000;
  std::uint64_t seed = 1;
  Ablation ablation = Ablation::full;

  double critic_lr = 1e-3;
  bool normalize_advantage = false;
  std::size_t finetune_iterations = 500;
  std::size_t early_stop_window = 20;
  std::size_t early_stop_patience = 0;  // iterations without moving-average gain; 0 disables
  double early_stop_tolerance = 1e-4;

  // Imputer.
  std::vector<std::size_t> imputer_hidden = {128, 128};
  Activation imputer_activation = Activation::relu;
  Activation imputer_output = Activation::identity;
  std::size_t noise_dim = 8;
  bool interpolation = true;
  double self_mask_fraction = 0.5;
  double smoothness_weight = 0.0;
  double gaussian_sigma = 1.0;
  std::size_t k_multiple = 1;
  std::size_t pretrain_epochs = 50;
  std::size_t pretrain_batch_size = 64;
  double pretrain_lr = 1e-3;

  // Policy.
  std::vector<std::size_t> actor_hidden = {128, 128};
  std::vector<std::size_t> critic_hidden = {64, 64};
  double actor_dropout = 0.1;

  // Evaluation.
  std::size_t eval_seeds = 3;
  std::size_t explicit_k = 8;
  std::size_t eval_k = 3;

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;

  ImputerSpec imputer_spec(std::size_t dim) const;
  PolicySpec policy_spec(std::size_t dim) const;
  PretrainConfig pretrain_config() const;
  ImputerLossConfig loss_config() const;
  ReinforceConfig reinforce_config() const { return {critic_lr, normalize_advantage}; }
};

/// Dataset-specific starting point for the knobs above.
JointConfig default_config(const std::string& dataset);

struct RunRow {
  std::size_t iteration = 0;
  double reward_e1 = 0.0;
  std::optional<double> reward_e2;
  double loss_unsup = 0.0;
  double loss_sup = 0.0;
  double actor_surrogate = 0.0;
  double critic_loss = 0.0;
};

/// Append-only per-iteration log plus per-run metadata.
class RunRecord {
 public:
  void append(const RunRow& row) { rows_.push_back(row); }
  const std::vector<RunRow>& rows() const { return rows_; }

  std::uint64_t seed = 0;
  std::string config_echo;
  std::map<std::string, std::uint64_t> checksums;

  void write_csv(const std::filesystem::path& path) const;

 private:
  std::vector<RunRow> rows_;
};

/// FNV-1a over the checkpoint encoding.
std::uint64_t model_checksum(const Checkpoint& ckpt);

/// Random streams of one outer iteration. Each phase owns its own generator,
/// so skipping a phase leaves every other draw unchanged.
enum class JointPhase : std::uint64_t {
  batch = 0,
  generate = 1,
  explore = 2,
  reward_e1 = 3,
  hypothetical = 4,
  roll_e2 = 5,
  reward_e2 = 6,
  roll_e3 = 7,
  adapt = 8,
};

Rng joint_stream(std::uint64_t seed, std::size_t iteration, JointPhase phase);

/// `batch` distinct indices drawn uniformly from [0, n) (all of them when batch >= n).
std::vector<std::size_t> sample_batch_indices(std::size_t n, std::size_t batch, Rng& rng);

struct JointHooks {
  /// Replaces the hypothetical adaptation result (phi_new) before it is used.
  std::function<ImputerModel(const ImputerModel& phi, const ImputerModel& phi_new)> hypothetical_adapt;
  std::function<void(const RunRow&)> on_iteration;
};

struct JointResult {
  PolicyModel policy;
  ImputerModel imputer;
  RunRecord record;
};

/// Alternating policy/imputer training on missing data only. `imputer` is
/// expected to be pretrained. Under Ablation::no_adaptation the imputer stays
/// frozen in the loop and is fine-tuned afterwards.
JointResult joint_train(const JointConfig& cfg, const MissingDataset& data, PolicyModel policy,
                        ImputerModel imputer, const JointHooks& hooks = {});

/// Imputer updates on episodes from a frozen policy.
ImputerModel finetune_after(const PolicyModel& policy, ImputerModel imputer, const MissingDataset& data,
                            const JointConfig& cfg);

// Baselines.

/// Uniform measurement order without replacement.
std::vector<std::size_t> uninform_order(std::size_t dim, std::size_t horizon, Rng& rng);
Episode baseline_uninform(const Vec& source, std::size_t horizon, Rng& rng);

/// Coordinate with the largest sample variance among unobserved ones; ties go low.
std::size_t explicit_choice(std::span<const Vec> candidates, const Mask& mask);
/// Measures, at every step, the coordinate the imputer is least sure about.
std::vector<Episode> baseline_explicit(const ImputerModel& imputer, std::span<const Vec> sources,
                                       std::size_t horizon, std::size_t k, Rng& rng);
Episode baseline_explicit(const ImputerModel& imputer, const Vec& source, std::size_t horizon, std::size_t k,
                          Rng& rng);

}  // namespace amjl
