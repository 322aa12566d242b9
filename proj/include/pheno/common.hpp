#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pheno {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Raised when CSV rows or joined records violate a domain invariant.
class IngestError : public Error {
 public:
  using Error::Error;
};

// Raised for invalid run configuration (bad flags, missing files, bad grids).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// FNV-1a 64-bit hash. Stable across platforms; used for seed derivation from
// string keys and for output manifests.
constexpr std::uint64_t fnv1a64(std::string_view s,
                                std::uint64_t h = 14695981039346656037ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

constexpr std::uint64_t fnv1a64_bytes(const void* data, std::size_t n,
                                      std::uint64_t h = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Stateful counterpart of splitmix64 for drawing sequences.
class SplitMix {
 public:
  explicit constexpr SplitMix(std::uint64_t seed) : state_(seed) {}
  constexpr std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ull;
    return splitmix64_mix(state_);
  }

 private:
  static constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  std::uint64_t state_;
};

// Deterministic seed derivation. Parallel and sequential generation of the
// same (seed, key...) streams must agree bit-exactly, so all worker seeds are
// derived from values, never from scheduling order.
constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b + 0x517cc1b727220a95ull));
}

constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b,
                                 std::uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

constexpr std::uint64_t mix_seed(std::uint64_t a, std::string_view key) {
  return mix_seed(a, fnv1a64(key));
}

}  // namespace pheno
