#include "amjl/experiment.hpp"

#include <cstdlib>
#include <stdexcept>

#include "amjl/datasets.hpp"

namespace amjl {

namespace {
constexpr std::uint64_t kDataTag = 0x64617461ULL;
constexpr std::uint64_t kMaskTag = 0x6d61736bULL;
constexpr std::uint64_t kInitTag = 0x696e6974ULL;
constexpr std::uint64_t kPretrainTag = 0x70726574ULL;
}  // namespace

std::filesystem::path default_mnist_dir() {
  if (const char* env = std::getenv("AMJL_MNIST_DIR"); env && *env) return env;
  return "data/mnist";
}

ExperimentData make_experiment_data(const JointConfig& cfg, std::uint64_t seed,
                                    const std::filesystem::path& mnist_dir) {
  GroundTruthSet train_truth;
  ExperimentData out;
  if (cfg.dataset == "sin-single" || cfg.dataset == "sin-double") {
    const auto mode = cfg.dataset == "sin-single" ? SinusoidMode::single : SinusoidMode::dual;
    auto split = gen_sinusoid_dataset(mode, mix64(seed ^ kDataTag));
    train_truth = std::move(split.train);
    out.test = std::move(split.test);
  } else if (cfg.dataset == "mnist12") {
    const auto images = mnist_dir / "train-images-idx3-ubyte";
    if (!std::filesystem::exists(images))
      throw std::runtime_error("MNIST images not found at " + images.string() +
                               " (run tools/fetch_mnist.py or set AMJL_MNIST_DIR)");
    train_truth = load_mnist12(images, kMnistTrain, 0);
    out.test = load_mnist12(images, kMnistTest, kMnistTrain);
  } else {
    throw std::invalid_argument("unknown dataset '" + cfg.dataset + "'");
  }
  Rng mask_rng = make_stream(seed, kMaskTag);
  out.train =
      mask_dataset(train_truth, MaskDistributionSpec::from_missing_rate(train_truth.dim, cfg.missing_rate), mask_rng)
          .missing;
  return out;
}

ImputerModel pretrain_imputer(const JointConfig& cfg, const MissingDataset& train, std::uint64_t seed,
                              std::vector<double>* epoch_losses) {
  Rng init = make_stream(seed, kInitTag, 0);
  ImputerModel model(cfg.imputer_spec(train.dim), init);
  Rng rng = make_stream(seed, kPretrainTag);
  auto res = pretrain(model, train, cfg.pretrain_config(), rng);
  if (epoch_losses) *epoch_losses = std::move(res.epoch_losses);
  return model;
}

PolicyModel init_policy(const JointConfig& cfg, std::size_t dim, std::uint64_t seed) {
  Rng init = make_stream(seed, kInitTag, 1);
  return PolicyModel(cfg.policy_spec(dim), init);
}

}  // namespace amjl
