#include "amjl/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "amjl/joint.hpp"

namespace amjl {

Measurer policy_measurer(const PolicyModel& policy, RolloutMode mode) {
  return [&policy, mode](std::span<const Vec> sources, std::size_t horizon, Rng& rng) {
    return run_episodes(policy, sources, horizon, RolloutSpec{mode, 0.0, DropoutMode::eval}, rng);
  };
}

Measurer uninform_measurer() {
  return [](std::span<const Vec> sources, std::size_t horizon, Rng& rng) {
    std::vector<Episode> out;
    out.reserve(sources.size());
    for (const auto& s : sources) out.push_back(baseline_uninform(s, horizon, rng));
    return out;
  };
}

Measurer explicit_measurer(const ImputerModel& imputer, std::size_t k) {
  return [&imputer, k](std::span<const Vec> sources, std::size_t horizon, Rng& rng) {
    return baseline_explicit(imputer, sources, horizon, k, rng);
  };
}

std::vector<EvalRow> eval_policy(const std::string& method, const Measurer& measurer, const ImputerModel& imputer,
                                 const GroundTruthSet& test, double missing_rate, const EvalOptions& opts) {
  if (test.examples.empty()) throw std::invalid_argument("eval_policy: no ground-truth examples");
  if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw std::invalid_argument("eval_policy: rate outside [0, 1)");
  if (opts.k == 0 || opts.n_seeds == 0 || opts.chunk == 0) throw std::invalid_argument("eval_policy: k, n_seeds, chunk must be >= 1");
  if (test.dim != imputer.dim()) throw DimensionError("eval_policy: test data and imputer dimensions differ");
  const std::size_t horizon = horizon_for(test.dim, missing_rate);
  const auto n = test.examples.size();

  std::vector<EvalRow> rows;
  for (std::size_t s = 0; s < opts.n_seeds; ++s) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t seed = opts.seed + s;
    Rng roll_rng = make_stream(seed, 0x6d656173ULL);
    Rng imp_rng = make_stream(seed, 0x696d7075ULL);
    double sum1 = 0.0, sumk = 0.0;
    for (std::size_t lo = 0; lo < n; lo += opts.chunk) {
      const std::size_t hi = std::min(n, lo + opts.chunk);
      const std::span<const Vec> sources(test.examples.data() + lo, hi - lo);
      const auto eps = measurer(sources, horizon, roll_rng);
      std::vector<MissingState> terms;
      terms.reserve(eps.size());
      for (const auto& e : eps) terms.push_back(e.terminal);
      std::vector<double> best(eps.size(), std::numeric_limits<double>::infinity());
      for (std::size_t j = 0; j < opts.k; ++j) {
        const Mat y = impute_batch(imputer, terms, imp_rng);
        for (std::size_t b = 0; b < eps.size(); ++b) {
          const double e = rmse(y.col(static_cast<Eigen::Index>(b)), sources[b]);
          if (j == 0) sum1 += e;
          best[b] = std::min(best[b], e);
        }
      }
      for (double b : best) sumk += b;
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back({method, opts.trained_rate, missing_rate, sum1 / static_cast<double>(n),
                    sumk / static_cast<double>(n), n, seed, dt});
  }
  return rows;
}

std::vector<EvalRow> sweep_missing_rates(const std::string& method, const Measurer& measurer,
                                         const ImputerModel& imputer, const GroundTruthSet& test,
                                         std::span<const double> rates, const EvalOptions& opts) {
  std::vector<EvalRow> out;
  for (double r : rates) {
    auto rows = eval_policy(method, measurer, imputer, test, r, opts);
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

std::vector<EvalSummary> summarize(std::span<const EvalRow> rows) {
  using Key = std::tuple<std::string, double, double>;
  std::map<Key, std::vector<const EvalRow*>> groups;
  std::vector<Key> order;
  for (const auto& r : rows) {
    Key key{r.method, r.trained_rate, r.eval_rate};
    auto& g = groups[key];
    if (g.empty()) order.push_back(key);
    g.push_back(&r);
  }
  auto stats = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    if (v.size() < 2) return std::pair{m, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    return std::pair{m, sd / std::sqrt(static_cast<double>(v.size()))};
  };
  std::vector<EvalSummary> out;
  for (const auto& key : order) {
    const auto& g = groups[key];
    std::vector<double> a, b;
    for (const auto* r : g) {
      a.push_back(r->top1);
      b.push_back(r->topk);
    }
    EvalSummary s;
    std::tie(s.method, s.trained_rate, s.eval_rate) = key;
    std::tie(s.top1_mean, s.top1_se) = stats(a);
    std::tie(s.topk_mean, s.topk_se) = stats(b);
    s.seeds = g.size();
    out.push_back(s);
  }
  return out;
}

void write_sweep_csv(const std::filesystem::path& path, std::span<const EvalRow> rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  f << "#schema=sweep/1\n";
  f << "method,trained_rate,eval_rate,top1_rmse,top3_rmse,n,seed\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%.17g,%zu,%llu\n", r.trained_rate, r.eval_rate, r.top1,
                  r.topk, r.n, static_cast<unsigned long long>(r.seed));
    f << r.method << buf;
  }
}

std::vector<EvalRow> read_sweep_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != "#schema=sweep/1") throw std::runtime_error(path.string() + ": not a sweep file");
  std::getline(f, line);
  std::vector<EvalRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    EvalRow r;
    r.method = cells[0];
    r.trained_rate = std::stod(cells[1]);
    r.eval_rate = std::stod(cells[2]);
    r.top1 = std::stod(cells[3]);
    r.topk = std::stod(cells[4]);
    r.n = std::stoull(cells[5]);
    r.seed = std::stoull(cells[6]);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace amjl
