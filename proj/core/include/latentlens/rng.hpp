#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace latentlens {

using Rng = std::mt19937_64;

/// Stream tags keep independent consumers of one master seed apart.
enum class Stream : std::uint64_t {
  seed = 1,
  ddpm_noise = 2,
  data = 3,
  balance = 4,
  split = 5,
  training = 6,
  fresh = 7,
  filter = 8,
  structure = 9,
  mixture = 10,
};

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Key for the counter-based substream (master, stream, index). Records
/// drawn from a substream depend only on the key, never on worker count
/// or evaluation order.
constexpr std::uint64_t substream_key(std::uint64_t master, Stream stream,
                                      std::uint64_t index,
                                      std::uint64_t salt = 0) noexcept {
  std::uint64_t h = mix64(master);
  h = mix64(h ^ static_cast<std::uint64_t>(stream));
  h = mix64(h ^ salt);
  return mix64(h ^ index);
}

inline Rng substream(std::uint64_t master, Stream stream, std::uint64_t index,
                     std::uint64_t salt = 0) {
  return Rng(substream_key(master, stream, index, salt));
}

inline Eigen::VectorXd standard_normal(Rng& rng, Eigen::Index dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v[i] = normal(rng);
  return v;
}

}  // namespace latentlens
