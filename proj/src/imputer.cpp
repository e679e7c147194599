#include "amjl/imputer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

namespace amjl {
namespace {

struct Proposal {
  Mat y;          // D x batch substitution proposals
  ForwardResult fwd;
};

Proposal propose_with_tape(const ImputerModel& model, std::span<const MissingState> states, const Mat& noise) {
  Proposal p;
  Rng unused(0);
  p.fwd = model.net().forward(model.build_inputs(states, noise), DropoutMode::eval, unused);
  p.y = p.fwd.output;
  if (model.interpolation()) {
    for (std::size_t b = 0; b < states.size(); ++b)
      p.y.col(static_cast<Eigen::Index>(b)) += interpolate_baseline(states[b]);
  }
  return p;
}

void check_finite(double loss, const char* what) {
  if (!std::isfinite(loss)) throw TrainingDivergedError(std::string(what) + ": loss is not finite");
}

}  // namespace

ImputerModel::ImputerModel(const ImputerSpec& spec, Rng& rng)
    : dim_(spec.dim), noise_dim_(spec.noise_dim), interpolation_(spec.interpolation) {
  if (spec.dim == 0) throw DimensionError("imputer dimension must be positive");
  std::vector<std::size_t> dims{input_dim()};
  dims.insert(dims.end(), spec.hidden.begin(), spec.hidden.end());
  dims.push_back(dim_);
  net_ = DenseNet(dims, spec.hidden_activation, spec.output_activation, {}, rng);
}

ImputerModel::ImputerModel(DenseNet net, std::size_t dim, std::size_t noise_dim, bool interpolation)
    : net_(std::move(net)), dim_(dim), noise_dim_(noise_dim), interpolation_(interpolation) {
  if (net_.input_dim() != input_dim() || net_.output_dim() != dim_)
    throw DimensionError("imputer network shape does not match dim/noise_dim");
}

Mat ImputerModel::build_inputs(std::span<const MissingState> states, const Mat& noise) const {
  const auto d = static_cast<Eigen::Index>(dim_);
  const auto z = static_cast<Eigen::Index>(noise_dim_);
  if (noise.rows() != z || noise.cols() != static_cast<Eigen::Index>(states.size()))
    throw DimensionError("imputer noise shape mismatch");
  Mat in(static_cast<Eigen::Index>(input_dim()), static_cast<Eigen::Index>(states.size()));
  for (std::size_t b = 0; b < states.size(); ++b) {
    const auto& s = states[b];
    if (s.dim() != dim_) throw DimensionError("imputer state dimension mismatch");
    auto col = in.col(static_cast<Eigen::Index>(b));
    encode_state_into(s, col.head(2 * d));
    Eigen::Index off = 2 * d;
    if (interpolation_) {
      col.segment(off, d) = interpolate_baseline(s);
      off += d;
    }
    col.segment(off, z) = noise.col(static_cast<Eigen::Index>(b));
  }
  return in;
}

Mat ImputerModel::draw_noise(std::size_t batch, Rng& rng) const {
  // A fresh distribution per column keeps the draws independent of batch grouping.
  Mat noise(static_cast<Eigen::Index>(noise_dim_), static_cast<Eigen::Index>(batch));
  for (Eigen::Index c = 0; c < noise.cols(); ++c) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index r = 0; r < noise.rows(); ++r) noise(r, c) = normal(rng);
  }
  return noise;
}

Mat ImputerModel::propose(std::span<const MissingState> states, const Mat& noise) const {
  return propose_with_tape(*this, states, noise).y;
}

Checkpoint ImputerModel::to_checkpoint() const {
  return {ModelRole::imputer,
          {static_cast<std::uint32_t>(dim_), static_cast<std::uint32_t>(noise_dim_), interpolation_ ? 1U : 0U},
          net_};
}

ImputerModel ImputerModel::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.role != ModelRole::imputer) throw CheckpointError("checkpoint is not an imputer");
  if (ckpt.meta.size() != 3) throw CheckpointError("imputer checkpoint needs 3 metadata words");
  return ImputerModel(ckpt.net, ckpt.meta[0], ckpt.meta[1], ckpt.meta[2] != 0);
}

Mat impute_batch(const ImputerModel& model, std::span<const MissingState> states, Rng& rng) {
  const Mat noise = model.draw_noise(states.size(), rng);
  Mat y = model.propose(states, noise);
  for (std::size_t b = 0; b < states.size(); ++b) {
    const auto& s = states[b];
    auto col = y.col(static_cast<Eigen::Index>(b));
    for (std::size_t i = 0; i < s.dim(); ++i)
      if (s.mask.observed(i)) col[static_cast<Eigen::Index>(i)] = s.values[static_cast<Eigen::Index>(i)];
  }
  return y;
}

Vec impute_sample(const ImputerModel& model, const MissingState& x_m, Rng& rng) {
  return impute_batch(model, std::span<const MissingState>(&x_m, 1), rng).col(0);
}

std::vector<Vec> impute_multiple(const ImputerModel& model, const MissingState& x_m, std::size_t k, Rng& rng) {
  if (k == 0) throw std::invalid_argument("impute_multiple: k must be >= 1");
  std::vector<MissingState> copies(k, x_m);
  const Mat y = impute_batch(model, copies, rng);
  std::vector<Vec> out;
  out.reserve(k);
  for (std::size_t j = 0; j < k; ++j) out.push_back(y.col(static_cast<Eigen::Index>(j)));
  return out;
}

void ImputerLossConfig::validate() const {
  if (!(self_mask_fraction > 0.0 && self_mask_fraction < 1.0))
    throw std::invalid_argument("self_mask_fraction must lie strictly inside (0, 1)");
  if (smoothness_weight < 0.0) throw std::invalid_argument("smoothness_weight must be >= 0");
  if (!(gaussian_sigma > 0.0)) throw std::invalid_argument("gaussian_sigma must be > 0");
  if (k_multiple == 0) throw std::invalid_argument("k_multiple must be >= 1");
}

Mat gaussian_residual_operator(std::size_t dim, double sigma) {
  const auto d = static_cast<Eigen::Index>(dim);
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    const double w = std::exp(-0.5 * (t * t) / (sigma * sigma));
    kernel[static_cast<std::size_t>(t + radius)] = w;
    total += w;
  }
  for (auto& w : kernel) w /= total;
  // Half-sample reflection: (c b a | a b c).
  auto reflect = [d](Eigen::Index j) {
    while (j < 0 || j >= d) {
      if (j < 0) j = -j - 1;
      if (j >= d) j = 2 * d - j - 1;
    }
    return j;
  };
  Mat op = Mat::Identity(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (int t = -radius; t <= radius; ++t) op(i, reflect(i + t)) -= kernel[static_cast<std::size_t>(t + radius)];
  return op;
}

double smoothness_penalty(const Vec& x, double sigma) {
  const Mat op = gaussian_residual_operator(static_cast<std::size_t>(x.size()), sigma);
  return (op * x).squaredNorm() / static_cast<double>(x.size());
}

LossResult loss_unsupervised(const ImputerModel& model, std::span<const MissingState> batch,
                             const ImputerLossConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t k = cfg.k_multiple;
  const auto d = static_cast<Eigen::Index>(model.dim());
  LossResult res;
  res.grad.assign(model.net().num_params(), 0.0);

  std::vector<MissingState> reduced;
  std::vector<std::vector<std::size_t>> hidden;
  std::vector<std::size_t> source;
  for (std::size_t e = 0; e < batch.size(); ++e) {
    const auto& x = batch[e];
    const std::size_t n_obs = x.mask.observed_count();
    if (n_obs < 2) {
      ++res.skipped;
      continue;
    }
    auto obs = x.mask.observed_indices();
    std::size_t n_hide = static_cast<std::size_t>(std::lround(cfg.self_mask_fraction * static_cast<double>(n_obs)));
    n_hide = std::min(n_hide, n_obs - 1);
    for (std::size_t i = 0; i < n_hide; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n_obs - 1);
      std::swap(obs[i], obs[pick(rng)]);
    }
    obs.resize(n_hide);
    MissingState r = x;
    for (auto i : obs) r.hide(i);
    reduced.push_back(std::move(r));
    hidden.push_back(std::move(obs));
    source.push_back(e);
  }
  res.counted = reduced.size();
  if (reduced.empty()) return res;

  std::vector<MissingState> states;
  states.reserve(reduced.size() * k);
  for (const auto& r : reduced)
    for (std::size_t j = 0; j < k; ++j) states.push_back(r);
  const Mat noise = model.draw_noise(states.size(), rng);
  auto prop = propose_with_tape(model, states, noise);
  const Mat& y = prop.y;

  const bool smooth = cfg.smoothness_weight > 0.0;
  Mat op, gram;
  if (smooth) {
    op = gaussian_residual_operator(model.dim(), cfg.gaussian_sigma);
    gram = op.transpose() * op;
  }
  Mat upstream = Mat::Zero(d, static_cast<Eigen::Index>(states.size()));
  const double inv_count = 1.0 / static_cast<double>(reduced.size());
  double total = 0.0;
  for (std::size_t e = 0; e < reduced.size(); ++e) {
    const auto& truth = batch[source[e]].values;
    const auto& hid = hidden[e];
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const auto col = static_cast<Eigen::Index>(e * k + j);
      double err = 0.0;
      for (auto i : hid) {
        const double diff = y(static_cast<Eigen::Index>(i), col) - truth[static_cast<Eigen::Index>(i)];
        err += diff * diff;
      }
      if (!hid.empty()) err /= static_cast<double>(hid.size());
      if (err < best) {
        best = err;
        best_j = j;
      }
    }
    double loss = best;
    if (!hid.empty()) {
      const auto col = static_cast<Eigen::Index>(e * k + best_j);
      const double scale = 2.0 / static_cast<double>(hid.size()) * inv_count;
      for (auto i : hid) {
        const auto ii = static_cast<Eigen::Index>(i);
        upstream(ii, col) += scale * (y(ii, col) - truth[ii]);
      }
    }
    if (smooth) {
      const auto& r = reduced[e];
      for (std::size_t j = 0; j < k; ++j) {
        const auto col = static_cast<Eigen::Index>(e * k + j);
        const Vec filled = substitute(r, y.col(col));
        const double pen = (op * filled).squaredNorm() / static_cast<double>(d);
        loss += cfg.smoothness_weight * pen / static_cast<double>(k);
        const Vec g = gram * filled * (2.0 / static_cast<double>(d)) *
                      (cfg.smoothness_weight / static_cast<double>(k)) * inv_count;
        for (Eigen::Index i = 0; i < d; ++i)
          if (!r.mask.observed(static_cast<std::size_t>(i))) upstream(i, col) += g[i];
      }
    }
    total += loss;
  }
  res.loss = total * inv_count;
  res.grad = model.net().backward(prop.fwd.tape, upstream).params;
  return res;
}

LossResult loss_supervised(const ImputerModel& model, std::span<const MissingState> states_in,
                           std::span<const Vec> targets, const ImputerLossConfig& cfg, Rng& rng) {
  cfg.validate();
  if (states_in.size() != targets.size()) throw DimensionError("loss_supervised: states/targets count mismatch");
  const std::size_t k = cfg.k_multiple;
  const auto d = static_cast<Eigen::Index>(model.dim());
  LossResult res;
  res.grad.assign(model.net().num_params(), 0.0);
  res.counted = states_in.size();
  if (states_in.empty()) return res;

  std::vector<MissingState> states;
  states.reserve(states_in.size() * k);
  for (const auto& s : states_in) {
    for (std::size_t j = 0; j < k; ++j) states.push_back(s);
  }
  const Mat noise = model.draw_noise(states.size(), rng);
  auto prop = propose_with_tape(model, states, noise);
  const Mat& y = prop.y;
  Mat upstream = Mat::Zero(d, static_cast<Eigen::Index>(states.size()));
  const double inv_count = 1.0 / static_cast<double>(states_in.size());
  double total = 0.0;
  for (std::size_t e = 0; e < states_in.size(); ++e) {
    const auto& s = states_in[e];
    const auto& t = targets[e];
    if (t.size() != d) throw DimensionError("loss_supervised: target length mismatch");
    const auto unobs = s.mask.unobserved_indices();
    if (unobs.empty()) continue;
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const auto col = static_cast<Eigen::Index>(e * k + j);
      double err = 0.0;
      for (auto i : unobs) {
        const double diff = y(static_cast<Eigen::Index>(i), col) - t[static_cast<Eigen::Index>(i)];
        err += diff * diff;
      }
      err /= static_cast<double>(unobs.size());
      if (err < best) {
        best = err;
        best_j = j;
      }
    }
    total += best;
    const auto col = static_cast<Eigen::Index>(e * k + best_j);
    const double scale = 2.0 / static_cast<double>(unobs.size()) * inv_count;
    for (auto i : unobs) {
      const auto ii = static_cast<Eigen::Index>(i);
      upstream(ii, col) += scale * (y(ii, col) - t[ii]);
    }
  }
  res.loss = total * inv_count;
  res.grad = model.net().backward(prop.fwd.tape, upstream).params;
  return res;
}

LossResult loss_supervised(const ImputerModel& model, const MissingState& x_m, const Vec& target,
                           const ImputerLossConfig& cfg, Rng& rng) {
  return loss_supervised(model, std::span<const MissingState>(&x_m, 1), std::span<const Vec>(&target, 1), cfg, rng);
}

PretrainResult pretrain(ImputerModel& model, const MissingDataset& data, const PretrainConfig& cfg, Rng& rng) {
  if (data.rows.empty()) throw std::invalid_argument("pretrain: empty dataset");
  if (cfg.batch_size == 0) throw std::invalid_argument("pretrain: batch_size must be >= 1");
  PretrainResult out{{}, Optimizer(cfg.optimizer, model.net().num_params())};
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<MissingState> batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double weighted = 0.0;
    std::size_t counted = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(data.rows[order[i]]);
      auto res = loss_unsupervised(model, batch, cfg.loss, rng);
      if (!std::isfinite(res.loss))
        throw TrainingDivergedError("pretrain diverged in epoch " + std::to_string(epoch) +
                                    " (batch starting at " + std::to_string(start) + ")");
      if (res.counted == 0) continue;
      out.optimizer.step(model.net(), res.grad);
      weighted += res.loss * static_cast<double>(res.counted);
      counted += res.counted;
    }
    const double epoch_loss = counted ? weighted / static_cast<double>(counted) : 0.0;
    check_finite(epoch_loss, "pretrain");
    out.epoch_losses.push_back(epoch_loss);
    const auto& c = out.epoch_losses;
    if (cfg.plateau_window > 0 && c.size() > cfg.plateau_window) {
      const double before = c[c.size() - 1 - cfg.plateau_window];
      const double rel = (before - c.back()) / std::max(std::abs(before), 1e-300);
      if (rel < cfg.plateau_tolerance) break;
    }
  }
  return out;
}

AdaptResult adapt_step(const ImputerModel& model, const Optimizer& optimizer,
                       std::span<const MissingState> missing_batch,
                       std::span<const MissingState> terminal_states, std::span<const Vec> targets,
                       double alpha, double alpha_prime, const ImputerLossConfig& cfg, Rng& rng) {
  if (alpha < 0.0 || alpha_prime < 0.0) throw std::invalid_argument("adapt_step: learning rates must be >= 0");
  AdaptResult out{model, optimizer, {}, {}};
  out.unsupervised = loss_unsupervised(model, missing_batch, cfg, rng);
  out.supervised = loss_supervised(model, terminal_states, targets, cfg, rng);
  check_finite(out.unsupervised.loss, "adapt_step (unsupervised)");
  check_finite(out.supervised.loss, "adapt_step (supervised)");
  const WeightedGradient terms[] = {{alpha, out.unsupervised.grad}, {alpha_prime, out.supervised.grad}};
  apply_weighted(out.optimizer, out.model.net(), terms);
  return out;
}

Vec interpolate_baseline(const MissingState& x_m, std::span<const double> grid) {
  const std::size_t d = x_m.dim();
  if (grid.size() != d) throw DimensionError("interpolate_baseline: grid length mismatch");
  Vec out = Vec::Zero(static_cast<Eigen::Index>(d));
  const auto obs = x_m.mask.observed_indices();
  if (obs.empty()) {
    static bool warned = false;
    if (!warned) {
      std::clog << "warning: interpolate_baseline called with no observations; returning zeros\n";
      warned = true;
    }
    return out;
  }
  auto value = [&](std::size_t i) { return x_m.values[static_cast<Eigen::Index>(i)]; };
  std::size_t next = 0;  // index into obs of the first observation at or after i
  for (std::size_t i = 0; i < d; ++i) {
    while (next < obs.size() && obs[next] < i) ++next;
    double v;
    if (next == 0) {
      v = value(obs.front());
    } else if (next == obs.size()) {
      v = value(obs.back());
    } else if (obs[next] == i) {
      v = value(i);
    } else {
      const std::size_t lo = obs[next - 1];
      const std::size_t hi = obs[next];
      const double t = (grid[i] - grid[lo]) / (grid[hi] - grid[lo]);
      v = value(lo) + t * (value(hi) - value(lo));
    }
    out[static_cast<Eigen::Index>(i)] = v;
  }
  return out;
}

Vec interpolate_baseline(const MissingState& x_m) {
  std::vector<double> grid(x_m.dim());
  std::iota(grid.begin(), grid.end(), 0.0);
  return interpolate_baseline(x_m, grid);
}

}  // namespace amjl
