#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace discosyn {

namespace fs = std::filesystem;

// Text helpers.
std::string trim(std::string_view text);
std::string to_lower_ascii(std::string_view text);
std::string collapse_whitespace(std::string_view text);
bool starts_with_icase(std::string_view text, std::string_view prefix);
std::vector<std::string> split(std::string_view text, char sep);

// Hashing. sha256_hex is the content digest used by caches and manifests.
std::string sha256_hex(std::string_view data);
std::uint64_t fnv1a64(std::string_view data);
std::uint64_t mix_seed(std::uint64_t seed, std::string_view salt);

// Deterministic random source. Only the engine comes from <random>; the
// distributions are written out so results do not depend on the standard
// library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);
  // Uniform double in [0, 1).
  double uniform01();
  double normal(double mean, double stddev);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[uniform_index(i)]);
    }
  }

  // k distinct indices from [0, n), returned in increasing order.
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
};

// Files.
std::string read_file(const fs::path& path);
void write_file_atomic(const fs::path& path, std::string_view content);
std::vector<std::string> read_lines(const fs::path& path);
// Digest of a file, or of every regular file below a directory (relative
// path and content). nullopt when the path does not exist.
std::optional<std::string> path_digest(const fs::path& path);

std::optional<std::string> getenv_string(const char* name);
// "mistral-7b" -> "MISTRAL_7B", for per-backend environment variables.
std::string env_suffix(std::string_view name);

}  // namespace discosyn
