#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace snipsearch {

using Tokens = std::vector<std::string>;
using PostId = std::int64_t;

/// Dense real vector for a question or a question-code pair.
using EmbeddingVector = std::vector<float>;

// Error hierarchy. Everything thrown by the library derives from Error.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct IngestError : Error {
  using Error::Error;
};
struct ModelError : Error {
  using Error::Error;
};
struct TrainingError : Error {
  using Error::Error;
};
struct IntegrityError : Error {
  using Error::Error;
};

// Seeded generator with portable helpers. std::uniform_int_distribution and
// friends are implementation-defined, so results would differ across
// standard libraries; these helpers only depend on mt19937_64 output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t uniform(std::uint64_t bound);
  // Uniform real in [0, 1).
  double uniform_real();
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

// FNV-1a, 64 bit. Used for artifact integrity checks and config hashes.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);
std::string hash_file(const std::string& path);

std::string join(const Tokens& tokens, std::string_view sep = " ");
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace snipsearch
