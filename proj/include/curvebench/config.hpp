#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace curvebench {

// Flat "key = value" configuration with '#' comments. Subcommands read a
// config file, then apply command-line overrides on top.
class Config {
public:
  Config() = default;

  static Config from_file(const std::string& path);
  static Config from_text(const std::string& text, const std::string& origin);

  void set(const std::string& key, const std::string& value);
  // Accepts "key=value"; throws ConfigError otherwise.
  void set_override(const std::string& assignment);

  bool has(const std::string& key) const;
  std::string get(const std::string& key) const;  // throws naming the key
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double_or(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int_or(const std::string& key, std::int64_t fallback) const;
  std::vector<double> get_double_list_or(const std::string& key,
                                         const std::vector<double>& fallback) const;
  std::vector<std::int64_t> get_int_list_or(const std::string& key,
                                            const std::vector<std::int64_t>& fallback) const;
  std::vector<std::string> get_list_or(const std::string& key,
                                       const std::vector<std::string>& fallback) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }
  // Canonical sorted key=value dump used for hashing and the manifest.
  std::string canonical_text() const;

private:
  std::map<std::string, std::string> kv_;
};

std::uint64_t fnv1a_hash(const std::string& data);
std::string hex64(std::uint64_t v);

}  // namespace curvebench
