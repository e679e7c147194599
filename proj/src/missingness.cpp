#include "amjl/missingness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

namespace amjl {

Mask::Mask(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  for (auto b : bits_) {
    if (b > 1) throw std::invalid_argument("mask entries must be 0 or 1");
    count_ += b;
  }
}

Mask Mask::all_observed(std::size_t dim) { return Mask(std::vector<std::uint8_t>(dim, 1)); }

std::vector<std::size_t> Mask::observed_indices() const {
  std::vector<std::size_t> idx;
  idx.reserve(count_);
  for (std::size_t i = 0; i < bits_.size(); ++i)
    if (bits_[i]) idx.push_back(i);
  return idx;
}

std::vector<std::size_t> Mask::unobserved_indices() const {
  std::vector<std::size_t> idx;
  idx.reserve(bits_.size() - count_);
  for (std::size_t i = 0; i < bits_.size(); ++i)
    if (!bits_[i]) idx.push_back(i);
  return idx;
}

MissingState MissingState::unobserved(std::size_t dim) {
  return {Vec::Zero(static_cast<Eigen::Index>(dim)), Mask(dim)};
}

MissingState MissingState::fully_observed(const Vec& x) {
  return {x, Mask::all_observed(static_cast<std::size_t>(x.size()))};
}

MissingState MissingState::from(const Vec& x, const Mask& mask) {
  if (static_cast<std::size_t>(x.size()) != mask.size())
    throw DimensionError("MissingState::from: value/mask length mismatch");
  MissingState s{Vec::Zero(x.size()), mask};
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask.observed(i)) s.values[static_cast<Eigen::Index>(i)] = x[static_cast<Eigen::Index>(i)];
  return s;
}

void MissingState::reveal(std::size_t i, double value) {
  values[static_cast<Eigen::Index>(i)] = value;
  mask.observe(i);
}

void MissingState::hide(std::size_t i) {
  values[static_cast<Eigen::Index>(i)] = 0.0;
  mask.hide(i);
}

Vec substitute(const MissingState& x_m, const Vec& y) {
  const auto d = x_m.dim();
  if (static_cast<std::size_t>(x_m.values.size()) != d || static_cast<std::size_t>(y.size()) != d)
    throw DimensionError("substitute: length mismatch");
  Vec out = y;
  for (std::size_t i = 0; i < d; ++i)
    if (x_m.mask.observed(i)) out[static_cast<Eigen::Index>(i)] = x_m.values[static_cast<Eigen::Index>(i)];
  return out;
}

Mask sample_mcar_mask(std::size_t dim, std::size_t n_observed, Rng& rng) {
  if (n_observed > dim)
    throw std::out_of_range("sample_mcar_mask: n_observed " + std::to_string(n_observed) +
                            " exceeds dimension " + std::to_string(dim));
  // Partial Fisher-Yates: the first n_observed slots form a uniform subset.
  std::vector<std::size_t> idx(dim);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < n_observed; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, dim - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  Mask m(dim);
  for (std::size_t i = 0; i < n_observed; ++i) m.observe(idx[i]);
  return m;
}

void encode_state_into(const MissingState& x_m, Eigen::Ref<Vec> out) {
  const auto d = static_cast<Eigen::Index>(x_m.dim());
  out.head(d) = x_m.values;
  for (Eigen::Index i = 0; i < d; ++i) out[d + i] = x_m.mask.observed(static_cast<std::size_t>(i)) ? 1.0 : 0.0;
}

Vec encode_state(const MissingState& x_m) {
  Vec out(2 * static_cast<Eigen::Index>(x_m.dim()));
  encode_state_into(x_m, out);
  return out;
}

MaskDistributionSpec MaskDistributionSpec::from_missing_rate(std::size_t dim, double missing_rate) {
  if (!(missing_rate >= 0.0 && missing_rate <= 1.0))
    throw std::invalid_argument("missing rate must lie in [0, 1]");
  return {static_cast<std::size_t>(std::lround(static_cast<double>(dim) * (1.0 - missing_rate)))};
}

MaskedData mask_dataset(const GroundTruthSet& complete, const MaskDistributionSpec& spec, Rng& rng) {
  MaskedData out;
  out.truth = complete;
  out.missing.dim = complete.dim;
  out.missing.rows.reserve(complete.size());
  for (const auto& x : complete.examples) {
    const Mask m = sample_mcar_mask(complete.dim, spec.n_observed, rng);
    out.missing.rows.push_back(MissingState::from(x, m));
  }
  return out;
}

namespace {

constexpr const char* kSchemaLine = "#schema=missing-dataset/1";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

}  // namespace

void write_missing_csv(const std::filesystem::path& path, const MissingDataset& data,
                       const GroundTruthSet* truth) {
  if (truth != nullptr && truth->size() != data.size())
    throw DimensionError("write_missing_csv: ground truth row count differs");
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << kSchemaLine << '\n';
  const std::size_t d = data.dim;
  bool first = true;
  auto col = [&](char prefix, std::size_t i) {
    if (!first) f << ',';
    first = false;
    f << prefix << i;
  };
  for (std::size_t i = 0; i < d; ++i) col('v', i);
  for (std::size_t i = 0; i < d; ++i) col('m', i);
  if (truth != nullptr)
    for (std::size_t i = 0; i < d; ++i) col('t', i);
  f << '\n';
  char buf[32];
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto& row = data.rows[r];
    for (std::size_t i = 0; i < d; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", row.values[static_cast<Eigen::Index>(i)]);
      f << (i ? "," : "") << buf;
    }
    for (std::size_t i = 0; i < d; ++i) f << ',' << (row.mask.observed(i) ? '1' : '0');
    if (truth != nullptr) {
      for (std::size_t i = 0; i < d; ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", truth->examples[r][static_cast<Eigen::Index>(i)]);
        f << ',' << buf;
      }
    }
    f << '\n';
  }
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

MissingCsv read_missing_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::vector<std::string> header;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    header = split_csv(line);
    break;
  }
  std::size_t nv = 0, nm = 0, nt = 0;
  for (const auto& h : header) {
    if (h.empty()) throw std::runtime_error(path.string() + ": empty header cell");
    switch (h[0]) {
      case 'v': ++nv; break;
      case 'm': ++nm; break;
      case 't': ++nt; break;
      default: throw std::runtime_error(path.string() + ": unexpected column " + h);
    }
  }
  if (nv == 0 || nv != nm || (nt != 0 && nt != nv))
    throw std::runtime_error(path.string() + ": header must have D value, D mask, optional D truth columns");
  MissingCsv out;
  out.missing.dim = nv;
  if (nt) out.truth = GroundTruthSet{nv, {}};
  const auto d = static_cast<Eigen::Index>(nv);
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw std::runtime_error(path.string() + ": row " + std::to_string(lineno) + " has " +
                               std::to_string(cells.size()) + " cells");
    Vec values(d);
    std::vector<std::uint8_t> bits(nv);
    for (Eigen::Index i = 0; i < d; ++i) values[i] = std::stod(cells[static_cast<std::size_t>(i)]);
    for (std::size_t i = 0; i < nv; ++i) {
      const auto& c = cells[nv + i];
      if (c != "0" && c != "1")
        throw std::runtime_error(path.string() + ": mask cell must be 0 or 1 (row " + std::to_string(lineno) + ")");
      bits[i] = c == "1" ? 1 : 0;
    }
    MissingState s{values, Mask(std::move(bits))};
    for (std::size_t i = 0; i < nv; ++i)
      if (!s.mask.observed(i)) s.values[static_cast<Eigen::Index>(i)] = 0.0;
    out.missing.rows.push_back(std::move(s));
    if (nt) {
      Vec t(d);
      for (Eigen::Index i = 0; i < d; ++i) t[i] = std::stod(cells[2 * nv + static_cast<std::size_t>(i)]);
      out.truth->examples.push_back(std::move(t));
    }
  }
  return out;
}

}  // namespace amjl
