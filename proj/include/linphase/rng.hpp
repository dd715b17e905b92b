#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

// Counter-based random numbers. Every draw is a pure function of
// (seed, stream, row, col), so matrices can be filled in any order or in
// parallel and grown without perturbing existing entries.
//
// Construction: the four words are folded through the SplitMix64 finalizer
//   h = mix(mix(mix(mix(seed ^ C0) ^ stream) ^ row) ^ col)
// and the top 53 bits of h give a uniform double in [0, 1). A standard
// normal uses Box-Muller on the uniforms at columns (2*col, 2*col + 1) of
// the same (seed, stream, row).
namespace linphase::rng {

// Independent streams for the different random objects in the library.
enum class Stream : std::uint64_t {
  inputs = 1,
  init_first_layer = 2,
  init_second_layer = 3,
  teacher_first_layer = 4,
  teacher_second_layer = 5,
  label_direction = 6,
  power_iteration = 7,
  cnn_filters = 8,
  cnn_readout = 9,
  probe = 10,
};

constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash(std::uint64_t seed, Stream stream, std::uint64_t row,
                             std::uint64_t col) {
  std::uint64_t h = mix64(seed ^ 0x5851f42d4c957f2dULL);
  h = mix64(h ^ static_cast<std::uint64_t>(stream));
  h = mix64(h ^ row);
  return mix64(h ^ col);
}

// Uniform on [0, 1).
inline double uniform(std::uint64_t seed, Stream stream, std::uint64_t row, std::uint64_t col) {
  return static_cast<double>(hash(seed, stream, row, col) >> 11) * 0x1.0p-53;
}

inline double standard_normal(std::uint64_t seed, Stream stream, std::uint64_t row,
                              std::uint64_t col) {
  const double u1 = 1.0 - uniform(seed, stream, row, 2 * col);  // (0, 1]
  const double u2 = uniform(seed, stream, row, 2 * col + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline double rademacher(std::uint64_t seed, Stream stream, std::uint64_t row,
                         std::uint64_t col) {
  return (hash(seed, stream, row, col) >> 63) != 0 ? 1.0 : -1.0;
}

// Derive a child seed, e.g. one per repetition of an experiment.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return mix64(seed * 0x2545f4914f6cdd1dULL + index + 1);
}

}  // namespace linphase::rng
