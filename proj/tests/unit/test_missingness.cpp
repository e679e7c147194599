#include "doctest.h"

#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "amjl/missingness.hpp"
#include "test_util.hpp"

using namespace amjl;
using testutil::vec;

namespace {

Mask mask_of(std::initializer_list<int> bits) {
  std::vector<std::uint8_t> b;
  for (int x : bits) b.push_back(static_cast<std::uint8_t>(x));
  return Mask(b);
}

}  // namespace

TEST_CASE("mask counts and validates its bits") {
  auto m = mask_of({1, 0, 1, 1});
  CHECK(m.observed_count() == 3);
  CHECK(m.unobserved_count() == 1);
  CHECK(m.unobserved_indices() == std::vector<std::size_t>{1});
  m.observe(1);
  m.observe(1);
  CHECK(m.observed_count() == 4);
  m.hide(0);
  CHECK(m.observed_count() == 3);
  CHECK_THROWS_AS(Mask(std::vector<std::uint8_t>{0, 2}), std::invalid_argument);
}

TEST_CASE("substitute keeps observed values and fills the rest") {
  const auto x = MissingState::from(vec({5, 0, 7}), mask_of({1, 0, 1}));
  const Vec out = substitute(x, vec({9, 9, 9}));
  CHECK(out == vec({5, 9, 7}));
}

TEST_CASE("substitute with full and empty masks") {
  const Vec v = vec({1.5, -2, 3});
  const Vec y = vec({7, 8, 9});
  CHECK(substitute(MissingState::fully_observed(v), y) == v);
  CHECK(substitute(MissingState::unobserved(3), y) == y);
  CHECK_THROWS_AS(substitute(MissingState::unobserved(3), vec({1, 2})), DimensionError);
}

TEST_CASE("substitute never alters an observed coordinate") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec x = testutil::randn(12, rng);
    const auto m = sample_mcar_mask(12, trial % 13, rng);
    const auto s = MissingState::from(x, m);
    const Vec out = substitute(s, testutil::randn(12, rng));
    for (std::size_t i = 0; i < 12; ++i)
      if (m.observed(i)) CHECK(out[static_cast<Eigen::Index>(i)] == x[static_cast<Eigen::Index>(i)]);
  }
}

TEST_CASE("mcar mask has exactly n ones") {
  Rng rng(1);
  CHECK(sample_mcar_mask(100, 10, rng).observed_count() == 10);
  CHECK(sample_mcar_mask(4, 4, rng) == mask_of({1, 1, 1, 1}));
  CHECK(sample_mcar_mask(5, 0, rng).observed_count() == 0);
  CHECK_THROWS_AS(sample_mcar_mask(4, 5, rng), std::out_of_range);
}

TEST_CASE("mcar inclusion frequency is uniform") {
  Rng rng(2);
  const int n = 100000;
  std::vector<int> hits(20, 0);
  for (int i = 0; i < n; ++i) {
    const auto m = sample_mcar_mask(20, 10, rng);
    for (std::size_t j = 0; j < 20; ++j) hits[j] += m.observed(j);
  }
  for (int h : hits) CHECK(std::abs(h / double(n) - 0.5) < 0.01);
}

TEST_CASE("mcar covers every subset of a small universe evenly") {
  // D = 4, n = 2 has 6 subsets; each should take about 1/6 of the draws.
  Rng rng(3);
  std::map<std::vector<std::uint8_t>, int> counts;
  const int n = 60000;
  for (int i = 0; i < n; ++i) ++counts[sample_mcar_mask(4, 2, rng).bits()];
  CHECK(counts.size() == 6);
  const double sd = std::sqrt(n * (1.0 / 6) * (5.0 / 6));
  for (const auto& [bits, c] : counts) CHECK(std::abs(c - n / 6.0) < 4 * sd);
}

TEST_CASE("encode_state concatenates values and mask") {
  CHECK(encode_state(MissingState::from(vec({1, 0}), mask_of({1, 0}))) == vec({1, 0, 1, 0}));
  CHECK(encode_state(MissingState::unobserved(3)) == Vec::Zero(6));
  CHECK(encode_state(MissingState::from(vec({.5, .2, 0}), mask_of({1, 1, 0}))) == vec({.5, .2, 0, 1, 1, 0}));
}

TEST_CASE("encode_state tells a measured zero from a missing value") {
  const auto a = MissingState::from(vec({0, 0}), mask_of({1, 0}));
  const auto b = MissingState::from(vec({0, 0}), mask_of({0, 0}));
  CHECK(encode_state(a) != encode_state(b));
}

TEST_CASE("missing state reveal and hide") {
  auto s = MissingState::unobserved(3);
  s.reveal(1, 4.5);
  CHECK(s.mask.observed(1));
  CHECK(s.values[1] == 4.5);
  s.hide(1);
  CHECK_FALSE(s.mask.observed(1));
  CHECK(s.values[1] == 0.0);
}

TEST_CASE("mask spec rounds the observed count") {
  CHECK(MaskDistributionSpec::from_missing_rate(100, 0.9).n_observed == 10);
  CHECK(MaskDistributionSpec::from_missing_rate(144, 0.85).n_observed == 22);
  CHECK(MaskDistributionSpec::from_missing_rate(7, 0.0).n_observed == 7);
}

TEST_CASE("mask_dataset with full observation reproduces the data") {
  Rng rng(5);
  GroundTruthSet gt{3, {vec({1, 2, 3}), vec({4, 5, 6})}};
  const auto md = mask_dataset(gt, {3}, rng);
  REQUIRE(md.missing.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) CHECK(substitute(md.missing.rows[i], Vec::Zero(3)) == gt.examples[i]);
}

TEST_CASE("mask_dataset observation counts and marginals") {
  Rng rng(6);
  GroundTruthSet gt;
  gt.dim = 100;
  for (int i = 0; i < 2880; ++i) gt.examples.push_back(testutil::randn(100, rng));
  const auto md = mask_dataset(gt, MaskDistributionSpec::from_missing_rate(100, 0.9), rng);
  std::vector<int> hits(100, 0);
  for (const auto& r : md.missing.rows) {
    CHECK(r.mask.observed_count() == 10);
    for (std::size_t j = 0; j < 100; ++j) hits[j] += r.mask.observed(j);
  }
  const double sd = std::sqrt(2880 * 0.1 * 0.9);
  int outside = 0;
  for (int h : hits) outside += std::abs(h - 288.0) > 3 * sd;
  CHECK(outside <= 2);  // 3 sigma bound, about 0.27 expected failures in 100
}

TEST_CASE("missing csv round-trips exactly with and without truth") {
  testutil::TempDir dir("csv");
  Rng rng(7);
  GroundTruthSet gt;
  gt.dim = 5;
  for (int i = 0; i < 4; ++i) gt.examples.push_back(testutil::randn(5, rng));
  const auto md = mask_dataset(gt, {2}, rng);
  write_missing_csv(dir / "a.csv", md.missing, &md.truth);
  write_missing_csv(dir / "b.csv", md.missing);
  const auto a = read_missing_csv(dir / "a.csv");
  const auto b = read_missing_csv(dir / "b.csv");
  REQUIRE(a.truth.has_value());
  CHECK_FALSE(b.truth.has_value());
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a.missing.rows[i].values == md.missing.rows[i].values);
    CHECK(a.missing.rows[i].mask == md.missing.rows[i].mask);
    CHECK(a.truth->examples[i] == gt.examples[i]);
    CHECK(b.missing.rows[i].mask == md.missing.rows[i].mask);
  }
  std::ifstream f(dir / "a.csv");
  std::string first;
  std::getline(f, first);
  CHECK(first == "#schema=missing-dataset/1");
}
