#include "amjl/nn.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

namespace amjl {
namespace {

std::uint64_t next_version() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

void activate(Activation a, Mat& z) {
  switch (a) {
    case Activation::identity:
      break;
    case Activation::tanh:
      z = z.array().tanh().matrix();
      break;
    case Activation::relu:
      z = z.cwiseMax(0.0);
      break;
    case Activation::sigmoid:
      z = (1.0 / (1.0 + (-z.array()).exp())).matrix();
      break;
  }
}

// Multiplies `delta` in place by the activation derivative, written in terms of the output.
void activation_backward(Activation a, const Mat& out, Mat& delta) {
  switch (a) {
    case Activation::identity:
      break;
    case Activation::tanh:
      delta.array() *= 1.0 - out.array().square();
      break;
    case Activation::relu:
      delta.array() *= (out.array() > 0.0).cast<double>();
      break;
    case Activation::sigmoid:
      delta.array() *= out.array() * (1.0 - out.array());
      break;
  }
}

}  // namespace

const char* to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

DenseNet::DenseNet(std::vector<std::size_t> dims, Activation hidden, Activation output,
                   std::vector<double> dropout_rates, Rng& rng)
    : dims_(std::move(dims)), dropout_(std::move(dropout_rates)) {
  if (dims_.size() < 2) throw DimensionError("DenseNet needs at least two layer dimensions");
  const std::size_t layers = dims_.size() - 1;
  if (dropout_.empty()) dropout_.assign(layers, 0.0);
  activations_.assign(layers, hidden);
  activations_.back() = output;
  std::size_t total = 0;
  for (std::size_t i = 0; i < layers; ++i) {
    offsets_.push_back(total);
    total += dims_[i] * dims_[i + 1] + dims_[i + 1];
  }
  params_.assign(total, 0.0);
  validate();
  for (std::size_t i = 0; i < layers; ++i) {
    const double limit = std::sqrt(6.0 / static_cast<double>(dims_[i] + dims_[i + 1]));
    std::uniform_real_distribution<double> init(-limit, limit);
    const std::size_t n = dims_[i] * dims_[i + 1];
    for (std::size_t k = 0; k < n; ++k) params_[offsets_[i] + k] = init(rng);
  }
  touch();
}

DenseNet::DenseNet(std::vector<std::size_t> dims, std::vector<Activation> activations,
                   std::vector<double> dropout_rates, std::vector<double> params)
    : dims_(std::move(dims)),
      activations_(std::move(activations)),
      dropout_(std::move(dropout_rates)),
      params_(std::move(params)) {
  if (dims_.size() < 2) throw DimensionError("DenseNet needs at least two layer dimensions");
  if (dropout_.empty()) dropout_.assign(dims_.size() - 1, 0.0);
  std::size_t total = 0;
  for (std::size_t i = 0; i + 1 < dims_.size(); ++i) {
    offsets_.push_back(total);
    total += dims_[i] * dims_[i + 1] + dims_[i + 1];
  }
  if (total != params_.size()) {
    throw DimensionError("parameter count " + std::to_string(params_.size()) +
                         " does not match layer dims (expected " + std::to_string(total) + ")");
  }
  validate();
  touch();
}

void DenseNet::validate() const {
  const std::size_t layers = dims_.size() - 1;
  if (activations_.size() != layers || dropout_.size() != layers)
    throw DimensionError("activation/dropout lists must have one entry per layer");
  for (auto d : dims_)
    if (d == 0) throw DimensionError("layer dimensions must be positive");
  for (double p : dropout_)
    if (!(p >= 0.0 && p < 1.0)) throw DimensionError("dropout rate must lie in [0, 1)");
}

bool DenseNet::has_dropout() const {
  return std::any_of(dropout_.begin(), dropout_.end(), [](double p) { return p > 0.0; });
}

void DenseNet::touch() { version_ = next_version(); }

void DenseNet::set_params(std::span<const double> values) {
  if (values.size() != params_.size()) throw DimensionError("set_params: size mismatch");
  std::copy(values.begin(), values.end(), params_.begin());
  touch();
}

std::span<double> DenseNet::mutable_params() {
  touch();
  return params_;
}

Eigen::Map<const RowMajorMat> DenseNet::weights(std::size_t layer) const {
  return {params_.data() + weight_offset(layer), static_cast<Eigen::Index>(dims_[layer + 1]),
          static_cast<Eigen::Index>(dims_[layer])};
}

Eigen::Map<const Vec> DenseNet::bias(std::size_t layer) const {
  return {params_.data() + bias_offset(layer), static_cast<Eigen::Index>(dims_[layer + 1])};
}

std::size_t DenseNet::layer_of_param(std::size_t index) const {
  auto it = std::upper_bound(offsets_.begin(), offsets_.end(), index);
  return static_cast<std::size_t>(it - offsets_.begin()) - 1;
}

ForwardResult DenseNet::forward(const Mat& inputs, DropoutMode mode, Rng& rng) const {
  return run(inputs, mode, &rng, nullptr);
}

ForwardResult DenseNet::forward(const Mat& inputs, const std::vector<Mat>& dropout_masks) const {
  if (dropout_masks.size() != num_layers())
    throw DimensionError("replayed dropout masks need one entry per layer");
  return run(inputs, DropoutMode::train, nullptr, &dropout_masks);
}

ForwardResult DenseNet::run(const Mat& inputs, DropoutMode mode, Rng* rng,
                            const std::vector<Mat>* replay) const {
  if (static_cast<std::size_t>(inputs.rows()) != input_dim()) {
    std::ostringstream os;
    os << "input has " << inputs.rows() << " rows, network expects " << input_dim();
    throw DimensionError(os.str());
  }
  ForwardResult r;
  r.tape.version = version_;
  const std::size_t layers = num_layers();
  r.tape.inputs.resize(layers);
  r.tape.outputs.resize(layers);
  r.tape.dropout_masks.resize(layers);
  const Eigen::Index batch = inputs.cols();
  Mat x = inputs;
  for (std::size_t i = 0; i < layers; ++i) {
    if (replay != nullptr) {
      const Mat& m = (*replay)[i];
      if (m.size() != 0) {
        if (m.rows() != x.rows() || m.cols() != batch)
          throw DimensionError("replayed dropout mask has wrong shape");
        x.array() *= m.array();
        r.tape.dropout_masks[i] = m;
      }
    } else if (mode == DropoutMode::train && dropout_[i] > 0.0) {
      const double keep = 1.0 - dropout_[i];
      std::bernoulli_distribution draw(keep);
      Mat m(x.rows(), batch);
      for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = draw(*rng) ? 1.0 / keep : 0.0;
      x.array() *= m.array();
      r.tape.dropout_masks[i] = std::move(m);
    }
    Mat z = weights(i) * x;
    z.colwise() += bias(i);
    activate(activations_[i], z);
    r.tape.inputs[i] = std::move(x);
    x = z;
    r.tape.outputs[i] = std::move(z);
  }
  r.output = std::move(x);
  return r;
}

Mat DenseNet::predict(const Mat& inputs) const {
  Rng unused(0);
  return run(inputs, DropoutMode::eval, &unused, nullptr).output;
}

Vec DenseNet::predict(const Vec& input) const {
  Mat in = input;
  return predict(in).col(0);
}

Gradients DenseNet::backward(const Tape& tape, const Mat& upstream) const {
  if (tape.version != version_)
    throw StaleTapeError("backward: parameters changed since the forward pass");
  const std::size_t layers = num_layers();
  if (tape.outputs.size() != layers) throw DimensionError("backward: tape layer count mismatch");
  const Mat& last = tape.outputs.back();
  if (upstream.rows() != last.rows() || upstream.cols() != last.cols())
    throw DimensionError("backward: upstream gradient shape mismatch");

  Gradients g;
  g.params.assign(params_.size(), 0.0);
  Mat delta = upstream;
  for (std::size_t i = layers; i-- > 0;) {
    activation_backward(activations_[i], tape.outputs[i], delta);
    Eigen::Map<RowMajorMat> gw(g.params.data() + weight_offset(i),
                               static_cast<Eigen::Index>(dims_[i + 1]),
                               static_cast<Eigen::Index>(dims_[i]));
    gw.noalias() = delta * tape.inputs[i].transpose();
    Eigen::Map<Vec> gb(g.params.data() + bias_offset(i), static_cast<Eigen::Index>(dims_[i + 1]));
    gb = delta.rowwise().sum();
    Mat dx = weights(i).transpose() * delta;
    if (tape.dropout_masks[i].size() != 0) dx.array() *= tape.dropout_masks[i].array();
    delta = std::move(dx);
  }
  g.input = std::move(delta);
  return g;
}

Optimizer::Optimizer(OptimizerConfig config, std::size_t num_params) : config_(config) {
  if (!(config_.learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  if (config_.kind == OptimizerKind::adam) {
    m_.assign(num_params, 0.0);
    v_.assign(num_params, 0.0);
  }
}

void Optimizer::step(DenseNet& net, std::span<const double> grads, double learning_rate) {
  if (grads.size() != net.num_params()) throw DimensionError("optimizer: gradient size mismatch");
  if (config_.kind == OptimizerKind::adam && m_.size() != grads.size())
    throw DimensionError("optimizer: moment buffers do not match parameter count");
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (!std::isfinite(grads[k])) {
      const std::size_t layer = net.layer_of_param(k);
      throw NonFiniteGradientError(
          layer, "non-finite gradient in layer " + std::to_string(layer) + " (parameter " +
                     std::to_string(k) + "); step rejected");
    }
  }
  auto p = net.mutable_params();
  ++steps_;
  if (config_.kind == OptimizerKind::sgd) {
    for (std::size_t k = 0; k < p.size(); ++k) p[k] -= learning_rate * grads[k];
    return;
  }
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t k = 0; k < p.size(); ++k) {
    m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * grads[k];
    v_[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * grads[k] * grads[k];
    const double mhat = m_[k] / c1;
    const double vhat = v_[k] / c2;
    p[k] -= learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
  }
}

void apply_weighted(Optimizer& opt, DenseNet& net, std::span<const WeightedGradient> terms) {
  double scale = 0.0;
  for (const auto& t : terms) {
    if (t.weight < 0.0) throw std::invalid_argument("apply_weighted: negative weight");
    scale = std::max(scale, t.weight);
  }
  if (scale == 0.0) return;
  std::vector<double> combined(net.num_params(), 0.0);
  for (const auto& t : terms) {
    if (t.weight == 0.0) continue;
    if (t.grad.size() != combined.size()) throw DimensionError("apply_weighted: size mismatch");
    const double w = t.weight / scale;
    for (std::size_t k = 0; k < combined.size(); ++k) combined[k] += w * t.grad[k];
  }
  opt.step(net, combined, scale);
}

std::vector<double> analytic_gradient(const DenseNet& net, const Vec& input, const LossFn& loss) {
  Rng unused(0);
  Mat in = input;
  auto fwd = net.forward(in, DropoutMode::eval, unused);
  Vec out = fwd.output.col(0);
  Vec dout(out.size());
  loss(out, &dout);
  Mat up = dout;
  return net.backward(fwd.tape, up).params;
}

std::vector<double> numeric_gradient(const DenseNet& net, const Vec& input, const LossFn& loss,
                                     double h) {
  DenseNet probe = net;
  std::vector<double> base(net.params().begin(), net.params().end());
  std::vector<double> grad(base.size());
  for (std::size_t k = 0; k < base.size(); ++k) {
    auto p = probe.mutable_params();
    p[k] = base[k] + h;
    const double up = loss(probe.predict(input), nullptr);
    p = probe.mutable_params();
    p[k] = base[k] - h;
    const double down = loss(probe.predict(input), nullptr);
    p[k] = base[k];
    grad[k] = (up - down) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) throw DimensionError("max_relative_error: size mismatch");
  double worst = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    const double a = analytic[k];
    const double n = numeric[k];
    const double err = std::abs(a - n) / std::max(1e-8, std::abs(a) + std::abs(n));
    worst = std::max(worst, err);
  }
  return worst;
}

double grad_check(const DenseNet& net, const Vec& input, const LossFn& loss, double h) {
  const auto a = analytic_gradient(net, input, loss);
  const auto n = numeric_gradient(net, input, loss, h);
  return max_relative_error(a, n);
}

}  // namespace amjl
