#include "amjl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace amjl {
namespace {

constexpr char kMagic[4] = {'A', 'M', 'J', 'L'};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double d) {
    const auto v = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return std::bit_cast<double>(v);
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
  }
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(ckpt.role));
  w.u32(static_cast<std::uint32_t>(ckpt.meta.size()));
  for (auto m : ckpt.meta) w.u32(m);
  const auto& net = ckpt.net;
  w.u32(static_cast<std::uint32_t>(net.num_layers()));
  for (auto d : net.dims()) w.u32(static_cast<std::uint32_t>(d));
  for (auto a : net.activations()) w.u8(static_cast<std::uint8_t>(a));
  for (auto p : net.dropout_rates()) w.f64(p);
  for (double p : net.params()) w.f64(p);
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  for (char c : kMagic)
    if (r.u8() != static_cast<std::uint8_t>(c)) throw CheckpointError("bad checkpoint magic");
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  const auto role = r.u8();
  if (role > 0x03) throw CheckpointError("unknown role tag " + std::to_string(role));
  ckpt.role = static_cast<ModelRole>(role);
  const auto meta_count = r.u32();
  for (std::uint32_t i = 0; i < meta_count; ++i) ckpt.meta.push_back(r.u32());
  const auto layers = r.u32();
  if (layers == 0 || layers > 1024) throw CheckpointError("implausible layer count");
  std::vector<std::size_t> dims;
  for (std::uint32_t i = 0; i <= layers; ++i) dims.push_back(r.u32());
  std::vector<Activation> acts;
  for (std::uint32_t i = 0; i < layers; ++i) {
    const auto tag = r.u8();
    if (tag > 3) throw CheckpointError("unknown activation tag " + std::to_string(tag));
    acts.push_back(static_cast<Activation>(tag));
  }
  std::vector<double> dropout;
  for (std::uint32_t i = 0; i < layers; ++i) dropout.push_back(r.f64());
  std::size_t total = 0;
  for (std::size_t i = 0; i < layers; ++i) total += dims[i] * dims[i + 1] + dims[i + 1];
  std::vector<double> params;
  params.reserve(total);
  for (std::size_t i = 0; i < total; ++i) params.push_back(r.f64());
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint payload");
  try {
    ckpt.net = DenseNet(std::move(dims), std::move(acts), std::move(dropout), std::move(params));
  } catch (const DimensionError& e) {
    throw CheckpointError(std::string("invalid network in checkpoint: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, ModelRole expected) {
  auto ckpt = load_checkpoint(path);
  if (ckpt.role != expected) {
    throw CheckpointError(path.string() + ": role tag " +
                          std::to_string(static_cast<int>(ckpt.role)) + ", expected " +
                          std::to_string(static_cast<int>(expected)));
  }
  return ckpt;
}

}  // namespace amjl
