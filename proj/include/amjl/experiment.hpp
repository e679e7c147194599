#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "amjl/imputer.hpp"
#include "amjl/joint.hpp"
#include "amjl/missingness.hpp"
#include "amjl/policy.hpp"

namespace amjl {

/// Training side carries masks only; the test side keeps its ground truth for evaluation.
struct ExperimentData {
  MissingDataset train;
  GroundTruthSet test;
};

inline constexpr std::size_t kMnistTrain = 8000;
inline constexpr std::size_t kMnistTest = 2000;

/// Directory holding the MNIST IDX files: $AMJL_MNIST_DIR, else ./data/mnist.
std::filesystem::path default_mnist_dir();

/// Builds the dataset named by cfg.dataset and masks the training part at cfg.missing_rate.
ExperimentData make_experiment_data(const JointConfig& cfg, std::uint64_t seed,
                                    const std::filesystem::path& mnist_dir = default_mnist_dir());

/// Fresh imputer pretrained on the missing training data.
ImputerModel pretrain_imputer(const JointConfig& cfg, const MissingDataset& train, std::uint64_t seed,
                              std::vector<double>* epoch_losses = nullptr);

PolicyModel init_policy(const JointConfig& cfg, std::size_t dim, std::uint64_t seed);

}  // namespace amjl
