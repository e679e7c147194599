#include "doctest.h"

#include <cstring>
#include <fstream>

#include "amjl/checkpoint.hpp"
#include "test_util.hpp"

using namespace amjl;

namespace {

Checkpoint sample(ModelRole role) {
  Rng rng(12);
  DenseNet net({5, 7, 3}, Activation::relu, Activation::sigmoid, {0.0, 0.25}, rng);
  auto p = net.mutable_params();
  p[0] = 1.0 / 3.0;  // not representable in a short decimal
  p[1] = -0.0;
  return {role, {5, 2, 1}, net};
}

}  // namespace

TEST_CASE("checkpoint encoding round-trips bit for bit") {
  const auto ck = sample(ModelRole::imputer);
  const auto bytes = encode_checkpoint(ck);
  const auto back = decode_checkpoint(bytes);
  CHECK(back.role == ModelRole::imputer);
  CHECK(back.meta == ck.meta);
  CHECK(back.net.dims() == ck.net.dims());
  CHECK(back.net.activations() == ck.net.activations());
  CHECK(back.net.dropout_rates() == ck.net.dropout_rates());
  CHECK(std::memcmp(back.net.params().data(), ck.net.params().data(), ck.net.num_params() * sizeof(double)) == 0);
  CHECK(encode_checkpoint(back) == bytes);
}

TEST_CASE("checkpoint starts with magic, little-endian version and role") {
  const auto bytes = encode_checkpoint(sample(ModelRole::critic));
  REQUIRE(bytes.size() > 9);
  CHECK(bytes[0] == 'A');
  CHECK(bytes[1] == 'M');
  CHECK(bytes[2] == 'J');
  CHECK(bytes[3] == 'L');
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  CHECK(bytes[6] == 0);
  CHECK(bytes[7] == 0);
  CHECK(bytes[8] == 0x03);
}

TEST_CASE("checkpoint file round-trip and role check") {
  testutil::TempDir dir("ckpt");
  const auto ck = sample(ModelRole::actor);
  save_checkpoint(dir / "a.ckpt", ck);
  CHECK(encode_checkpoint(load_checkpoint(dir / "a.ckpt")) == encode_checkpoint(ck));
  CHECK_NOTHROW(load_checkpoint(dir / "a.ckpt", ModelRole::actor));
  CHECK_THROWS_AS(load_checkpoint(dir / "a.ckpt", ModelRole::imputer), CheckpointError);
}

TEST_CASE("corrupted checkpoints are rejected") {
  const auto good = encode_checkpoint(sample(ModelRole::imputer));
  SUBCASE("bad magic") {
    auto b = good;
    b[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(b), CheckpointError);
  }
  SUBCASE("unknown version") {
    auto b = good;
    b[4] = 9;
    CHECK_THROWS_AS(decode_checkpoint(b), CheckpointError);
  }
  SUBCASE("truncated") {
    auto b = good;
    b.resize(b.size() - 1);
    CHECK_THROWS_AS(decode_checkpoint(b), CheckpointError);
  }
  SUBCASE("trailing bytes") {
    auto b = good;
    b.push_back(0);
    CHECK_THROWS_AS(decode_checkpoint(b), CheckpointError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/x.ckpt"), CheckpointError);
  }
}
