#include "amjl/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <utility>
#include <vector>

namespace amjl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("config key '" + key + "': cannot read '" + value + "' as " + expected);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "a boolean");
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto n = to_u64(key, trim(item));
    if (n == 0) bad_value(key, v, "a list of positive widths");
    out.push_back(static_cast<std::size_t>(n));
  }
  return out;
}

Activation to_activation(const std::string& key, const std::string& v) {
  for (auto a : {Activation::identity, Activation::tanh, Activation::relu, Activation::sigmoid})
    if (v == to_string(a)) return a;
  bad_value(key, v, "an activation (identity, tanh, relu, sigmoid)");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  const char* key;
  std::function<void(JointConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const JointConfig&)> get;
};

#define AMJL_DOUBLE(name) \
  Field{#name, [](JointConfig& c, const std::string& k, const std::string& v) { c.name = to_double(k, v); }, \
        [](const JointConfig& c) { return fmt(c.name); }}
#define AMJL_SIZE(name) \
  Field{#name, [](JointConfig& c, const std::string& k, const std::string& v) { c.name = to_u64(k, v); }, \
        [](const JointConfig& c) { return std::to_string(c.name); }}
#define AMJL_BOOL(name) \
  Field{#name, [](JointConfig& c, const std::string& k, const std::string& v) { c.name = to_bool(k, v); }, \
        [](const JointConfig& c) { return std::string(c.name ? "true" : "false"); }}
#define AMJL_SIZES(name) \
  Field{#name, [](JointConfig& c, const std::string& k, const std::string& v) { c.name = to_sizes(k, v); }, \
        [](const JointConfig& c) { return fmt(c.name); }}
#define AMJL_ACT(name) \
  Field{#name, [](JointConfig& c, const std::string& k, const std::string& v) { c.name = to_activation(k, v); }, \
        [](const JointConfig& c) { return std::string(to_string(c.name)); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"dataset", [](JointConfig& c, const std::string&, const std::string& v) { c.dataset = v; },
            [](const JointConfig& c) { return c.dataset; }},
      AMJL_DOUBLE(missing_rate),
      AMJL_DOUBLE(alpha),
      AMJL_DOUBLE(alpha_prime),
      AMJL_DOUBLE(beta),
      AMJL_DOUBLE(beta_prime),
      AMJL_DOUBLE(explore),
      AMJL_SIZE(k_reward),
      AMJL_SIZE(batch_size),
      AMJL_SIZE(outer_iterations),
      AMJL_SIZE(seed),
      Field{"ablation",
            [](JointConfig& c, const std::string& k, const std::string& v) {
              try {
                c.ablation = parse_ablation(v);
              } catch (const std::invalid_argument&) {
                bad_value(k, v, "an ablation (full, no-meta, no-adaptation)");
              }
            },
            [](const JointConfig& c) { return std::string(to_string(c.ablation)); }},
      AMJL_DOUBLE(critic_lr),
      AMJL_BOOL(normalize_advantage),
      AMJL_SIZE(finetune_iterations),
      AMJL_SIZE(early_stop_window),
      AMJL_SIZE(early_stop_patience),
      AMJL_DOUBLE(early_stop_tolerance),
      AMJL_SIZES(imputer_hidden),
      AMJL_ACT(imputer_activation),
      AMJL_ACT(imputer_output),
      AMJL_SIZE(noise_dim),
      AMJL_BOOL(interpolation),
      AMJL_DOUBLE(self_mask_fraction),
      AMJL_DOUBLE(smoothness_weight),
      AMJL_DOUBLE(gaussian_sigma),
      AMJL_SIZE(k_multiple),
      AMJL_SIZE(pretrain_epochs),
      AMJL_SIZE(pretrain_batch_size),
      AMJL_DOUBLE(pretrain_lr),
      AMJL_SIZES(actor_hidden),
      AMJL_SIZES(critic_hidden),
      AMJL_DOUBLE(actor_dropout),
      AMJL_SIZE(eval_seeds),
      AMJL_SIZE(explicit_k),
      AMJL_SIZE(eval_k),
  };
  return table;
}

#undef AMJL_DOUBLE
#undef AMJL_SIZE
#undef AMJL_BOOL
#undef AMJL_SIZES
#undef AMJL_ACT

}  // namespace

void set_config_value(JointConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(cfg, key, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

JointConfig parse_config(const std::string& text, JointConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

JointConfig load_config(const std::filesystem::path& path, JointConfig base) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string config_to_text(const JointConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + "=" + f.get(cfg) + "\n";
  return out;
}

}  // namespace amjl
