#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dwtraj {

// Random stream keyed by (seed, stream index). Two streams with the same key
// produce identical sequences regardless of which thread runs them or when.
class StreamRng {
 public:
  using result_type = std::mt19937_64::result_type;

  StreamRng(std::uint64_t seed, std::uint64_t stream) : engine_(make_seed(seed, stream)) {}

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  // Uniform on the open interval (0, 1), 52 bits of resolution.
  double uniform() {
    return (static_cast<double>(engine_() >> 12) + 0.5) * 0x1.0p-52;
  }

  // Waiting time of a Poisson process with the given rate.
  double exponential(double rate) { return -std::log(uniform()) / rate; }

 private:
  static std::mt19937_64 make_seed(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x9e3779b9u};
    return std::mt19937_64(seq);
  }

  std::mt19937_64 engine_;
};

}  // namespace dwtraj
