#pragma once

#include <cstdint>
#include <random>

namespace lasgd {

using Rng = std::mt19937_64;

// Independent per-node streams. Stream 0 drives mini-batch sampling, stream 1
// compute-time sampling, so a change to the timing model never shifts batches.
enum class RngStream : std::uint64_t { Batches = 0, ComputeTime = 1, Init = 2, Probe = 3 };

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t run_seed, std::uint64_t rank, RngStream stream) noexcept {
  return mix64(mix64(mix64(run_seed) ^ rank) ^ static_cast<std::uint64_t>(stream));
}

}  // namespace lasgd
