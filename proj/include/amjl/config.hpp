#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "amjl/joint.hpp"

namespace amjl {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sets one field by its config key. Unknown keys and malformed values throw ConfigError.
void set_config_value(JointConfig& cfg, const std::string& key, const std::string& value);

/// Flat `key=value` lines; `#` starts a comment. Values override `base`.
JointConfig parse_config(const std::string& text, JointConfig base);
JointConfig load_config(const std::filesystem::path& path, JointConfig base);

/// Every field as `key=value`, in declaration order. Parses back to an equal config.
std::string config_to_text(const JointConfig& cfg);

}  // namespace amjl
