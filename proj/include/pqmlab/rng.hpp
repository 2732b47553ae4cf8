#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace pqm {

/// One splitmix64 output step; used for all seed derivation.
std::uint64_t splitmix64(std::uint64_t x);

/// FNV-1a 64-bit hash, stable across platforms (unlike std::hash).
std::uint64_t fnv1a64(std::string_view s);

/// Derive a child seed from a parent seed and a sequence of salts (integers
/// or strings, the latter hashed with fnv1a64).
/// derive_seed(s, a, b) == derive_seed(derive_seed(s, a), b).
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t salt);

inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view salt) {
  return derive_seed(parent, fnv1a64(salt));
}

inline std::uint64_t salt_value(std::uint64_t salt) { return salt; }
inline std::uint64_t salt_value(std::string_view salt) { return fnv1a64(salt); }

template <typename Salt, typename... Rest>
  requires(sizeof...(Rest) > 0)
std::uint64_t derive_seed(std::uint64_t parent, Salt salt, Rest... rest) {
  return derive_seed(derive_seed(parent, salt_value(salt)), rest...);
}

/// Deterministic generator. The engine is std::mt19937_64 (fully specified by
/// the standard); the distributions are implemented here because the standard
/// library's distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller; spare value cached.
  double normal();

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace pqm
