#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <utility>
#include <vector>

#include "amjl/missingness.hpp"

namespace amjl {

inline constexpr std::size_t kSinusoidGrid = 100;
inline constexpr double kGridMin = -5.0;
inline constexpr double kGridMax = 5.0;

enum class SinusoidMode { single, dual };

struct SineTerm {
  double amplitude = 1.0;  // [0.1, 1]
  double phase = 0.0;      // [0, 2*pi]
  double frequency = 1.0;  // [0.5, 2]
};

struct SinusoidParams {
  SineTerm first;
  SineTerm second;  // used in dual mode only
};

/// x_i = -5 + 10 i / 99
double grid_point(std::size_t i);

/// Throws std::out_of_range for parameters outside their sampling ranges.
Vec gen_sinusoid(const SinusoidParams& params, SinusoidMode mode);
SinusoidParams sample_sinusoid_params(Rng& rng);

struct TrainTestSplit {
  GroundTruthSet train;
  GroundTruthSet test;
};

TrainTestSplit gen_sinusoid_dataset(SinusoidMode mode, std::uint64_t seed, std::size_t n_train = 2880,
                                    std::size_t n_test = 720);

// IDX (MNIST) loading.

enum class IdxErrorKind { bad_magic, truncated, dimension_mismatch, io };

class IdxError : public std::runtime_error {
 public:
  IdxError(IdxErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  IdxErrorKind kind() const { return kind_; }

 private:
  IdxErrorKind kind_;
};

struct IdxImages {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Vec> images;       // row-major pixels scaled to [0, 1]
  std::vector<std::uint8_t> labels;  // empty when no label file was given
};

/// Images must be 28x28. Labels, when given, must match the image count.
IdxImages load_mnist_idx(const std::filesystem::path& images,
                         const std::filesystem::path& labels = {});

inline constexpr std::size_t kMnistSide = 28;
inline constexpr std::size_t kSmallSide = 12;

/// Center 24x24 crop followed by 2x2 block averaging.
Vec crop_resize_12(const Vec& image28);

/// Loads an IDX file and converts every image to 12x12.
GroundTruthSet load_mnist12(const std::filesystem::path& images, std::size_t limit = 0,
                            std::size_t offset = 0);

}  // namespace amjl
