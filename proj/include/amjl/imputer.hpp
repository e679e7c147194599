#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "amjl/checkpoint.hpp"
#include "amjl/missingness.hpp"
#include "amjl/nn.hpp"

namespace amjl {

struct ImputerSpec {
  std::size_t dim = 0;
  std::size_t noise_dim = 8;
  std::vector<std::size_t> hidden = {128, 128};
  Activation hidden_activation = Activation::relu;
  Activation output_activation = Activation::identity;  // sigmoid for images
  /// Adds the piecewise-linear interpolation of the observations as an input
  /// channel and as the base the network output is added to.
  bool interpolation = false;
};

/// Stochastic imputer: the network sees [values, mask, (interpolation), noise]
/// and proposes a substitution for every coordinate.
class ImputerModel {
 public:
  ImputerModel() = default;
  ImputerModel(const ImputerSpec& spec, Rng& rng);
  ImputerModel(DenseNet net, std::size_t dim, std::size_t noise_dim, bool interpolation);

  std::size_t dim() const { return dim_; }
  std::size_t noise_dim() const { return noise_dim_; }
  bool interpolation() const { return interpolation_; }
  std::size_t input_dim() const { return (interpolation_ ? 3 : 2) * dim_ + noise_dim_; }

  const DenseNet& net() const { return net_; }
  DenseNet& net() { return net_; }

  /// Network input for a batch; `noise` is noise_dim x batch.
  Mat build_inputs(std::span<const MissingState> states, const Mat& noise) const;
  /// Draws noise_dim standard normals per column, column by column.
  Mat draw_noise(std::size_t batch, Rng& rng) const;
  /// Substitution proposals y (before masking) for given inputs; D x batch.
  Mat propose(std::span<const MissingState> states, const Mat& noise) const;

  Checkpoint to_checkpoint() const;
  static ImputerModel from_checkpoint(const Checkpoint& ckpt);

 private:
  DenseNet net_;
  std::size_t dim_ = 0;
  std::size_t noise_dim_ = 0;
  bool interpolation_ = false;
};

/// One completed example: observed coordinates exact, the rest sampled.
Vec impute_sample(const ImputerModel& model, const MissingState& x_m, Rng& rng);
std::vector<Vec> impute_multiple(const ImputerModel& model, const MissingState& x_m, std::size_t k, Rng& rng);
/// One sample per state; D x batch. Consumes noise in the same order as repeated impute_sample.
Mat impute_batch(const ImputerModel& model, std::span<const MissingState> states, Rng& rng);

struct ImputerLossConfig {
  double self_mask_fraction = 0.5;  // rho, strictly inside (0, 1)
  double smoothness_weight = 0.0;   // lambda
  double gaussian_sigma = 1.0;      // in grid steps
  /// Noise draws per example; the loss keeps the best draw (k = 1 is plain squared error).
  std::size_t k_multiple = 1;

  void validate() const;
};

struct LossResult {
  double loss = 0.0;
  std::vector<double> grad;  // with respect to the imputer parameters
  std::size_t counted = 0;
  std::size_t skipped = 0;
};

/// Self-masking reconstruction: hide a fraction of each example's observed
/// coordinates and score the prediction on them, plus the optional smoothness penalty.
LossResult loss_unsupervised(const ImputerModel& model, std::span<const MissingState> batch,
                             const ImputerLossConfig& cfg, Rng& rng);

/// Squared error against complete targets on the unobserved coordinates only.
LossResult loss_supervised(const ImputerModel& model, std::span<const MissingState> states,
                           std::span<const Vec> targets, const ImputerLossConfig& cfg, Rng& rng);
LossResult loss_supervised(const ImputerModel& model, const MissingState& x_m, const Vec& target,
                           const ImputerLossConfig& cfg, Rng& rng);

/// (1 - G) applied as a matrix, G the truncated (3 sigma) reflective Gaussian filter.
Mat gaussian_residual_operator(std::size_t dim, double sigma);
double smoothness_penalty(const Vec& x, double sigma);

class TrainingDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PretrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  OptimizerConfig optimizer{};
  ImputerLossConfig loss{};
  double plateau_tolerance = 1e-4;
  std::size_t plateau_window = 5;
};

struct PretrainResult {
  std::vector<double> epoch_losses;
  Optimizer optimizer;
};

PretrainResult pretrain(ImputerModel& model, const MissingDataset& data, const PretrainConfig& cfg, Rng& rng);

struct AdaptResult {
  ImputerModel model;
  Optimizer optimizer;
  LossResult unsupervised;
  LossResult supervised;
};

/// One combined step  phi - alpha grad L_u(real batch) - alpha' grad L_s(terminal states, targets).
/// Inputs are left untouched; the updated copies are returned.
AdaptResult adapt_step(const ImputerModel& model, const Optimizer& optimizer,
                       std::span<const MissingState> missing_batch,
                       std::span<const MissingState> terminal_states, std::span<const Vec> targets,
                       double alpha, double alpha_prime, const ImputerLossConfig& cfg, Rng& rng);

/// Piecewise-linear interpolation of the observed points over `grid`,
/// constant beyond the outermost observations.
Vec interpolate_baseline(const MissingState& x_m, std::span<const double> grid);
/// Uniform grid (index positions).
Vec interpolate_baseline(const MissingState& x_m);

}  // namespace amjl
