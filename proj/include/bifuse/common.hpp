#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace bifuse {

// All precondition violations surface as std::invalid_argument with a
// message that names the offending call site; numeric blow-ups (non-finite
// values mid-computation) surface as std::runtime_error.
inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

using Rng = std::mt19937_64;

// Derive an independent RNG stream from a base seed.  Streams are identified
// by small integers so that adding a new consumer never perturbs existing
// ones.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  // SplitMix64 scramble keeps nearby (seed, stream) pairs uncorrelated.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return Rng(z ^ (z >> 31));
}

inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string fnv1a64_hex(const std::string& s) {
  std::uint64_t h = fnv1a64(s.data(), s.size());
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

}  // namespace bifuse
