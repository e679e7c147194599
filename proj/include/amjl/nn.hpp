#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "amjl/rng.hpp"

namespace amjl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowMajorMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation : std::uint8_t { identity = 0, tanh = 1, relu = 2, sigmoid = 3 };

enum class DropoutMode { train, eval };

const char* to_string(Activation a);

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Backward was called with a tape recorded against different parameters.
class StaleTapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NonFiniteGradientError : public std::runtime_error {
 public:
  NonFiniteGradientError(std::size_t layer, const std::string& what)
      : std::runtime_error(what), layer_(layer) {}
  std::size_t layer() const { return layer_; }

 private:
  std::size_t layer_;
};

/// Cached activations of one batched forward pass. Columns are examples.
struct Tape {
  std::uint64_t version = 0;
  std::vector<Mat> inputs;         // input of layer i after dropout
  std::vector<Mat> outputs;        // post-activation output of layer i
  std::vector<Mat> dropout_masks;  // 0 or 1/(1-p) per entry; empty when the layer had no dropout
};

struct ForwardResult {
  Mat output;
  Tape tape;
};

struct Gradients {
  std::vector<double> params;  // same layout as DenseNet::params()
  Mat input;
};

/// Fully connected network. Layer i maps dims[i] -> dims[i+1]; dropout of
/// layer i acts on that layer's input. Parameters live in one flat buffer:
/// for each layer, the row-major weight matrix followed by the bias.
class DenseNet {
 public:
  DenseNet() = default;

  /// Glorot-uniform weights, zero biases.
  DenseNet(std::vector<std::size_t> dims, Activation hidden, Activation output,
           std::vector<double> dropout_rates, Rng& rng);

  /// An empty dropout list means no dropout anywhere.
  DenseNet(std::vector<std::size_t> dims, std::vector<Activation> activations,
           std::vector<double> dropout_rates, std::vector<double> params);

  std::size_t num_layers() const { return activations_.size(); }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t output_dim() const { return dims_.back(); }
  const std::vector<std::size_t>& dims() const { return dims_; }
  const std::vector<Activation>& activations() const { return activations_; }
  const std::vector<double>& dropout_rates() const { return dropout_; }
  bool has_dropout() const;

  std::size_t num_params() const { return params_.size(); }
  std::span<const double> params() const { return params_; }
  void set_params(std::span<const double> values);
  /// Writable view; invalidates outstanding tapes.
  std::span<double> mutable_params();

  std::uint64_t version() const { return version_; }

  Eigen::Map<const RowMajorMat> weights(std::size_t layer) const;
  Eigen::Map<const Vec> bias(std::size_t layer) const;
  std::size_t layer_of_param(std::size_t index) const;

  ForwardResult forward(const Mat& inputs, DropoutMode mode, Rng& rng) const;
  /// Replays previously drawn dropout masks (one entry per layer, empty = none).
  ForwardResult forward(const Mat& inputs, const std::vector<Mat>& dropout_masks) const;

  Mat predict(const Mat& inputs) const;
  Vec predict(const Vec& input) const;

  /// Parameter gradients are summed over the batch columns.
  Gradients backward(const Tape& tape, const Mat& upstream) const;

 private:
  ForwardResult run(const Mat& inputs, DropoutMode mode, Rng* rng,
                    const std::vector<Mat>* replay) const;
  void touch();
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + dims_[layer] * dims_[layer + 1];
  }
  void validate() const;

  std::vector<std::size_t> dims_;
  std::vector<Activation> activations_;
  std::vector<double> dropout_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
  std::uint64_t version_ = 0;
};

enum class OptimizerKind : std::uint8_t { sgd = 0, adam = 1 };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerConfig config, std::size_t num_params);

  const OptimizerConfig& config() const { return config_; }
  std::uint64_t steps() const { return steps_; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }

  void step(DenseNet& net, std::span<const double> grads) { step(net, grads, config_.learning_rate); }
  /// Throws NonFiniteGradientError before touching any state.
  void step(DenseNet& net, std::span<const double> grads, double learning_rate);

 private:
  OptimizerConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t steps_ = 0;
};

struct WeightedGradient {
  double weight;
  std::span<const double> grad;
};

/// Descends on sum_i weight_i * grad_i. The largest weight becomes the step's
/// learning rate and the gradients are combined relative to it, so SGD
/// performs exactly p -= sum_i w_i g_i. All-zero weights leave everything untouched.
void apply_weighted(Optimizer& opt, DenseNet& net, std::span<const WeightedGradient> terms);

// Gradient verification.

/// Returns the loss for one output vector; writes dLoss/dOutput when `grad` is non-null.
using LossFn = std::function<double(const Vec& output, Vec* grad)>;

std::vector<double> analytic_gradient(const DenseNet& net, const Vec& input, const LossFn& loss);
std::vector<double> numeric_gradient(const DenseNet& net, const Vec& input, const LossFn& loss,
                                     double h = 1e-5);
/// max_i |a_i - n_i| / max(1e-8, |a_i| + |n_i|)
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric);
double grad_check(const DenseNet& net, const Vec& input, const LossFn& loss, double h = 1e-5);

}  // namespace amjl
