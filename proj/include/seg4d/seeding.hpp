#pragma once

#include <cstdint>

namespace seg4d {

/// Independent, reproducible sub-seed for a named stream (splitmix64 mix).
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace seg4d
