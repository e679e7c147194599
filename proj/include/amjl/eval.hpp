#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "amjl/episode.hpp"
#include "amjl/imputer.hpp"
#include "amjl/missingness.hpp"
#include "amjl/policy.hpp"

namespace amjl {

/// Produces one episode per source, each measuring `horizon` coordinates.
using Measurer = std::function<std::vector<Episode>(std::span<const Vec> sources, std::size_t horizon, Rng& rng)>;

Measurer policy_measurer(const PolicyModel& policy, RolloutMode mode);
Measurer uninform_measurer();
Measurer explicit_measurer(const ImputerModel& imputer, std::size_t k);

struct EvalRow {
  std::string method;
  double trained_rate = 0.0;
  double eval_rate = 0.0;
  double top1 = 0.0;  // first candidate
  double topk = 0.0;  // best of k candidates
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double wall_time = 0.0;  // seconds
};

struct EvalOptions {
  double trained_rate = 0.0;
  std::size_t k = 3;
  std::size_t n_seeds = 3;
  std::uint64_t seed = 1;
  std::size_t chunk = 256;  // episodes rolled together
};

/// Episodes run on the true data; one row per evaluation seed.
std::vector<EvalRow> eval_policy(const std::string& method, const Measurer& measurer, const ImputerModel& imputer,
                                 const GroundTruthSet& test, double missing_rate, const EvalOptions& opts);

std::vector<EvalRow> sweep_missing_rates(const std::string& method, const Measurer& measurer,
                                         const ImputerModel& imputer, const GroundTruthSet& test,
                                         std::span<const double> rates, const EvalOptions& opts);

struct EvalSummary {
  std::string method;
  double trained_rate = 0.0;
  double eval_rate = 0.0;
  double top1_mean = 0.0;
  double top1_se = 0.0;
  double topk_mean = 0.0;
  double topk_se = 0.0;
  std::size_t seeds = 0;
};

/// Mean and standard error over seeds for every (method, trained_rate, eval_rate).
std::vector<EvalSummary> summarize(std::span<const EvalRow> rows);

void write_sweep_csv(const std::filesystem::path& path, std::span<const EvalRow> rows);
std::vector<EvalRow> read_sweep_csv(const std::filesystem::path& path);

}  // namespace amjl
