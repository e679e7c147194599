#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "amjl/nn.hpp"

namespace amjl {

// Binary layout, all integers little-endian:
//   "AMJL" | version u32 | role u8 | meta count u32 | meta u32[count]
//   | layer count u32 | dims u32[layers + 1] | activation u8[layers]
//   | dropout f64[layers] | per layer: weights f64 (row-major), bias f64

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class ModelRole : std::uint8_t { generic = 0x00, imputer = 0x01, actor = 0x02, critic = 0x03 };

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  ModelRole role = ModelRole::generic;
  std::vector<std::uint32_t> meta;
  DenseNet net;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Loads and checks the role tag.
Checkpoint load_checkpoint(const std::filesystem::path& path, ModelRole expected);

}  // namespace amjl
