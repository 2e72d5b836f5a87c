#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>

namespace bilevel {

using Rng = std::mt19937_64;

/// One SplitMix64 step. Small, well-mixed generator used only to derive
/// independent seed streams from (base seed, stream index) pairs.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Deterministic seed for stream `stream` of run seed `base`. Distinct
/// streams (episodes, init, shuffling) never share raw engine state.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t s = base ^ (0x5851f42d4c957f2dull * (stream + 1));
  return splitmix64(s);
}

/// Draws an index from an explicit probability vector by walking the CDF.
/// The vector must sum to ~1; trailing mass absorbs rounding error.
inline int sample_categorical(const Eigen::VectorXd& probs, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace bilevel
