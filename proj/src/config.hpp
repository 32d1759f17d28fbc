#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace discosyn {

// Flat key-path configuration:
//
//   # comment
//   include common.cfg
//   generation.n_arg1 = 4000
//   seeds = 1, 2, 3
//
// Later assignments override earlier ones, including those from included
// files. Relative include paths and path values resolve against the directory
// of the file that contains them. Every lookup records the effective value,
// defaults included, so the snapshot documents the whole run.
class Config {
 public:
  Config() = default;

  static Config load(const std::filesystem::path& file);
  static Config parse(std::string_view text, const std::filesystem::path& base_dir = ".");

  void set(const std::string& key, const std::string& value);
  bool contains(const std::string& key) const { return values_.contains(key); }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::optional<std::string> get_optional(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Comma-separated list; whitespace around items is dropped.
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;
  // Absolute path, resolved against the defining file's directory. Empty
  // fallback plus a missing key gives nullopt.
  std::optional<std::filesystem::path> get_path(const std::string& key,
                                                const std::optional<std::filesystem::path>& fallback = {}) const;

  // Effective values of every key looked up so far, in key order. Paths are
  // recorded as written.
  const std::map<std::string, std::string>& snapshot() const { return snapshot_; }
  std::string snapshot_text() const;
  // Same keys with path values made absolute; loadable from anywhere.
  std::string resolved_snapshot_text() const;
  // Keys set in the file that no lookup consumed.
  std::vector<std::string> unused_keys() const;

 private:
  struct Entry {
    std::string value;
    std::filesystem::path base_dir;
  };
  void parse_into(std::string_view text, const std::filesystem::path& base_dir,
                  std::set<std::filesystem::path>& stack);
  const Entry* lookup(const std::string& key) const;
  void record(const std::string& key, const std::string& value,
              const std::optional<std::string>& resolved = std::nullopt) const;

  std::map<std::string, Entry> values_;
  mutable std::map<std::string, std::string> snapshot_;
  mutable std::map<std::string, std::string> resolved_;
  mutable std::set<std::string> consumed_;
};

}  // namespace discosyn
