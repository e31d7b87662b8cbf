#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace ressl {

using Rng = std::mt19937_64;

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

// 64-bit FNV-1a over bytes.
std::uint64_t fnv1a(std::string_view bytes) noexcept;

// Derives an independent stream seed from a base seed, a purpose tag and
// optional integer coordinates. The same arguments always give the same seed;
// changing any of them gives an unrelated one.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                          std::initializer_list<std::uint64_t> coords = {}) noexcept;

inline Rng make_rng(std::uint64_t base, std::string_view tag,
                    std::initializer_list<std::uint64_t> coords = {}) {
  return Rng(derive_seed(base, tag, coords));
}

// Beta(a, a) draw via two gamma variates.
double sample_symmetric_beta(Rng& rng, double alpha);

}  // namespace ressl
