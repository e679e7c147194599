#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "amjl/nn.hpp"
#include "amjl/rng.hpp"

namespace amjl {

/// Observation indicator: bit i is 1 when coordinate i has been measured.
class Mask {
 public:
  Mask() = default;
  explicit Mask(std::size_t dim) : bits_(dim, 0) {}
  /// Throws std::invalid_argument on entries other than 0/1.
  explicit Mask(std::vector<std::uint8_t> bits);

  static Mask all_observed(std::size_t dim);

  std::size_t size() const { return bits_.size(); }
  bool observed(std::size_t i) const { return bits_[i] != 0; }
  void observe(std::size_t i) {
    if (bits_[i] == 0) {
      bits_[i] = 1;
      ++count_;
    }
  }
  void hide(std::size_t i) {
    if (bits_[i] != 0) {
      bits_[i] = 0;
      --count_;
    }
  }
  std::size_t observed_count() const { return count_; }
  std::size_t unobserved_count() const { return bits_.size() - count_; }
  std::vector<std::size_t> observed_indices() const;
  std::vector<std::size_t> unobserved_indices() const;
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  friend bool operator==(const Mask& a, const Mask& b) { return a.bits_ == b.bits_; }

 private:
  std::vector<std::uint8_t> bits_;
  std::size_t count_ = 0;
};

/// Observed values with zeros at unobserved coordinates, plus the mask.
struct MissingState {
  Vec values;
  Mask mask;

  static MissingState unobserved(std::size_t dim);
  static MissingState fully_observed(const Vec& x);
  /// Copies x where mask is 1, zero elsewhere.
  static MissingState from(const Vec& x, const Mask& mask);

  std::size_t dim() const { return mask.size(); }
  void reveal(std::size_t i, double value);
  void hide(std::size_t i);
};

/// Observed coordinates from the state, y everywhere else.
Vec substitute(const MissingState& x_m, const Vec& y);

/// Exactly n_observed ones, uniform over subsets.
Mask sample_mcar_mask(std::size_t dim, std::size_t n_observed, Rng& rng);

/// [values, mask] as a 2D-long vector.
Vec encode_state(const MissingState& x_m);
void encode_state_into(const MissingState& x_m, Eigen::Ref<Vec> out);

struct MaskDistributionSpec {
  std::size_t n_observed = 0;

  /// n_observed = round(D * (1 - missing_rate)).
  static MaskDistributionSpec from_missing_rate(std::size_t dim, double missing_rate);
};

/// What training code consumes. Carries no ground truth.
struct MissingDataset {
  std::size_t dim = 0;
  std::vector<MissingState> rows;

  std::size_t size() const { return rows.size(); }
};

/// Complete examples, reserved for evaluation.
struct GroundTruthSet {
  std::size_t dim = 0;
  std::vector<Vec> examples;

  std::size_t size() const { return examples.size(); }
};

struct MaskedData {
  MissingDataset missing;
  GroundTruthSet truth;
};

/// Independent MCAR mask per example; ground truth kept separately.
MaskedData mask_dataset(const GroundTruthSet& complete, const MaskDistributionSpec& spec, Rng& rng);

// Missing-dataset CSV: "#schema=missing-dataset/1", then header v0..,m0..[,t0..].

void write_missing_csv(const std::filesystem::path& path, const MissingDataset& data,
                       const GroundTruthSet* truth = nullptr);

struct MissingCsv {
  MissingDataset missing;
  std::optional<GroundTruthSet> truth;
};

MissingCsv read_missing_csv(const std::filesystem::path& path);

}  // namespace amjl
