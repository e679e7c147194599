#include "amjl/datasets.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>

namespace amjl {

double grid_point(std::size_t i) {
  return kGridMin + (kGridMax - kGridMin) * static_cast<double>(i) /
                        static_cast<double>(kSinusoidGrid - 1);
}

namespace {

void check_term(const SineTerm& t) {
  const bool ok = t.amplitude >= 0.1 && t.amplitude <= 1.0 && t.phase >= 0.0 &&
                  t.phase <= 2.0 * std::numbers::pi && t.frequency >= 0.5 && t.frequency <= 2.0;
  if (!ok) throw std::out_of_range("sinusoid parameters outside A in [0.1,1], b in [0,2pi], w in [0.5,2]");
}

SineTerm sample_term(Rng& rng) {
  std::uniform_real_distribution<double> amp(0.1, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> freq(0.5, 2.0);
  SineTerm t;
  t.amplitude = amp(rng);
  t.phase = phase(rng);
  t.frequency = freq(rng);
  return t;
}

}  // namespace

Vec gen_sinusoid(const SinusoidParams& params, SinusoidMode mode) {
  check_term(params.first);
  if (mode == SinusoidMode::dual) check_term(params.second);
  Vec y(static_cast<Eigen::Index>(kSinusoidGrid));
  for (std::size_t i = 0; i < kSinusoidGrid; ++i) {
    const double x = grid_point(i);
    double v = params.first.amplitude * std::sin(params.first.frequency * x + params.first.phase);
    if (mode == SinusoidMode::dual)
      v += params.second.amplitude * std::sin(params.second.frequency * x + params.second.phase);
    y[static_cast<Eigen::Index>(i)] = v;
  }
  return y;
}

SinusoidParams sample_sinusoid_params(Rng& rng) {
  SinusoidParams p;
  p.first = sample_term(rng);
  p.second = sample_term(rng);
  return p;
}

TrainTestSplit gen_sinusoid_dataset(SinusoidMode mode, std::uint64_t seed, std::size_t n_train,
                                    std::size_t n_test) {
  TrainTestSplit out;
  out.train.dim = out.test.dim = kSinusoidGrid;
  Rng train_rng = make_stream(seed, 0x7261696eULL);
  Rng test_rng = make_stream(seed, 0x74657374ULL);
  for (std::size_t i = 0; i < n_train; ++i)
    out.train.examples.push_back(gen_sinusoid(sample_sinusoid_params(train_rng), mode));
  for (std::size_t i = 0; i < n_test; ++i)
    out.test.examples.push_back(gen_sinusoid(sample_sinusoid_params(test_rng), mode));
  return out;
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IdxError(IdxErrorKind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t pos, const std::filesystem::path& path) {
  if (b.size() < pos + 4) throw IdxError(IdxErrorKind::truncated, path.string() + ": truncated IDX header");
  return (std::uint32_t{b[pos]} << 24) | (std::uint32_t{b[pos + 1]} << 16) |
         (std::uint32_t{b[pos + 2]} << 8) | std::uint32_t{b[pos + 3]};
}

}  // namespace

IdxImages load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto bytes = read_file(images);
  const auto magic = be32(bytes, 0, images);
  if (magic != 0x00000803U)
    throw IdxError(IdxErrorKind::bad_magic, images.string() + ": bad image magic " + std::to_string(magic));
  const std::size_t count = be32(bytes, 4, images);
  IdxImages out;
  out.rows = be32(bytes, 8, images);
  out.cols = be32(bytes, 12, images);
  if (out.rows != kMnistSide || out.cols != kMnistSide)
    throw IdxError(IdxErrorKind::dimension_mismatch,
                   images.string() + ": expected 28x28 images, got " + std::to_string(out.rows) + "x" +
                       std::to_string(out.cols));
  const std::size_t pixels = out.rows * out.cols;
  if (bytes.size() < 16 + count * pixels)
    throw IdxError(IdxErrorKind::truncated, images.string() + ": file holds fewer pixels than its header declares");
  out.images.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    Vec img(static_cast<Eigen::Index>(pixels));
    const std::uint8_t* src = bytes.data() + 16 + n * pixels;
    for (std::size_t k = 0; k < pixels; ++k) img[static_cast<Eigen::Index>(k)] = src[k] / 255.0;
    out.images.push_back(std::move(img));
  }
  if (!labels.empty()) {
    const auto lb = read_file(labels);
    const auto lmagic = be32(lb, 0, labels);
    if (lmagic != 0x00000801U)
      throw IdxError(IdxErrorKind::bad_magic, labels.string() + ": bad label magic " + std::to_string(lmagic));
    const std::size_t lcount = be32(lb, 4, labels);
    if (lcount != count)
      throw IdxError(IdxErrorKind::dimension_mismatch,
                     labels.string() + ": " + std::to_string(lcount) + " labels for " + std::to_string(count) + " images");
    if (lb.size() < 8 + lcount) throw IdxError(IdxErrorKind::truncated, labels.string() + ": truncated label file");
    out.labels.assign(lb.begin() + 8, lb.begin() + 8 + static_cast<std::ptrdiff_t>(lcount));
  }
  return out;
}

Vec crop_resize_12(const Vec& image28) {
  if (static_cast<std::size_t>(image28.size()) != kMnistSide * kMnistSide)
    throw DimensionError("crop_resize_12 expects a 28x28 image");
  Vec out(static_cast<Eigen::Index>(kSmallSide * kSmallSide));
  constexpr std::size_t border = 2;
  for (std::size_t r = 0; r < kSmallSide; ++r) {
    for (std::size_t c = 0; c < kSmallSide; ++c) {
      const std::size_t r0 = border + 2 * r;
      const std::size_t c0 = border + 2 * c;
      auto px = [&](std::size_t rr, std::size_t cc) {
        return image28[static_cast<Eigen::Index>(rr * kMnistSide + cc)];
      };
      out[static_cast<Eigen::Index>(r * kSmallSide + c)] =
          0.25 * (px(r0, c0) + px(r0, c0 + 1) + px(r0 + 1, c0) + px(r0 + 1, c0 + 1));
    }
  }
  return out;
}

GroundTruthSet load_mnist12(const std::filesystem::path& images, std::size_t limit, std::size_t offset) {
  const auto idx = load_mnist_idx(images);
  GroundTruthSet out;
  out.dim = kSmallSide * kSmallSide;
  const std::size_t end = limit == 0 ? idx.images.size() : std::min(idx.images.size(), offset + limit);
  for (std::size_t n = offset; n < end; ++n) out.examples.push_back(crop_resize_12(idx.images[n]));
  return out;
}

}  // namespace amjl
