#pragma once
// Shared error types and small utilities used across the library.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace curiosity {

// Raised when input data violates a documented schema or precondition
// (bad file contents, unknown ids, malformed dialogs). Distinct from
// plain std::runtime_error so callers can map it to a dedicated exit code.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

// Derives an independent child seed from a master seed and a stream tag,
// so that per-dialog / per-turn randomness does not share a single stream.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t x = master ^ (0x9E3779B97F4A7C15ull * (stream + 1));
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

// FNV-1a over a byte string; used for vocabulary fingerprints in checkpoints.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xCBF29CE484222325ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace curiosity
