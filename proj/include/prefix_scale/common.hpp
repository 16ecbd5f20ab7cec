#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pscale {

// ============================================================================
// Error taxonomy
// ============================================================================
//
// Exit-code contract of the CLI:
//   ValidationError / CapabilityError -> 1
//   TransportError                    -> 2
//   (check failures)                  -> 3

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad user input: flags, configs, dataset files, out-of-range parameters.
struct ValidationError : Error {
  using Error::Error;
};

/// A backend cannot serve the request (e.g. full distributions on a top-k
/// server, training on a non-trainable backend).
struct CapabilityError : Error {
  using Error::Error;
};

/// Network failure or malformed server reply. `attempts` counts how many
/// tries were made before giving up.
struct TransportError : Error {
  explicit TransportError(const std::string& what, int attempts_made = 1)
      : Error(what), attempts(attempts_made) {}
  int attempts;
};

struct ParseError : Error {
  using Error::Error;
};

// ============================================================================
// Hashing / seeded randomness
// ============================================================================
//
// All sampling randomness is counter-based: a step's uniform draw is a pure
// function of (seed, counter). This makes continuations resume an attempt's
// random stream exactly, so a prefix of length K followed by a continuation
// under the same candidate seed reproduces the full attempt token-for-token.

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline uint64_t hash_mix(uint64_t a, uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

/// Uniform in [0, 1) as a pure function of (seed, counter).
inline double seeded_uniform(uint64_t seed, uint64_t counter) {
  return double(splitmix64(seed ^ splitmix64(counter + 1)) >> 11) * 0x1.0p-53;
}

/// Per-candidate seed: reproducible and independent across (run, question,
/// candidate index).
inline uint64_t derive_candidate_seed(uint64_t run_seed,
                                      std::string_view question_id,
                                      uint64_t candidate_index) {
  return hash_mix(hash_mix(run_seed, fnv1a64(question_id)), candidate_index);
}

}  // namespace pscale
