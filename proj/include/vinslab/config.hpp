#pragma once

// Flat run configuration: `key = value` lines, '#' comments. Every key has a
// typed default; some defaults are "auto" and resolve per environment.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vinslab/bc.hpp"
#include "vinslab/envs.hpp"
#include "vinslab/vins.hpp"
#include "vinslab/vins_rl.hpp"

namespace vinslab {

enum class ValueKind { boolean, integer, real, text };

class RunConfig {
 public:
  /// Every known key at its default.
  RunConfig();

  /// Throws ConfigError("unknown key: <key>") for unknown keys and a
  /// ConfigError naming the key for values of the wrong type.
  void set(const std::string& key, const std::string& value);
  /// "key=value" as given on the command line.
  void set_assignment(const std::string& assignment);
  void load_file(const std::filesystem::path& path);
  static RunConfig from_file(const std::filesystem::path& path);

  bool is_auto(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  long get_int(const std::string& key) const;
  double get_real(const std::string& key) const;
  const std::string& get_text(const std::string& key) const;
  std::vector<std::string> keys() const;

  /// Copy with every "auto" replaced by its environment-dependent value.
  RunConfig resolved() const;
  std::string to_text() const;
  void write(const std::filesystem::path& path) const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;

 private:
  struct Entry {
    ValueKind kind = ValueKind::text;
    std::string value;  // canonical text
    bool allows_auto = false;
    friend bool operator==(const Entry&, const Entry&) = default;
  };
  void declare(const std::string& key, ValueKind kind, std::string value, bool allows_auto = false);
  const Entry& entry(const std::string& key) const;
  const std::string& concrete(const std::string& key) const;

  std::map<std::string, Entry> entries_;
};

/// Builders read a resolved configuration.
EnvSpec env_spec(const RunConfig& cfg);
BCConfig bc_config(const RunConfig& cfg);
VinsConfig vins_config(const RunConfig& cfg);
RlConfig rl_config(const RunConfig& cfg);
std::uint64_t run_seed(const RunConfig& cfg);

/// The `out` key, unless VINSLAB_OUT is set.
std::filesystem::path output_dir(const RunConfig& cfg);

}  // namespace vinslab
