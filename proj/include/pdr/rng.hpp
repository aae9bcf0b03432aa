#pragma once

#include <cstdint>
#include <random>

namespace pdr {

// Splittable deterministic RNG stream. child(key) derives an independent
// substream from the stream's identity alone, so spawning children never
// depends on how much the parent has been consumed. Draw helpers construct
// their std:: distribution per call, so no distribution state leaks between
// calls and a copied stream replays identically.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : key_(mix(seed + 0x9E3779B97F4A7C15ull)) {
    engine_.seed(mix(key_ ^ 0xA0761D6478BD642Full));
  }

  RngStream child(std::uint64_t key) const {
    return RngStream(FromKey{}, mix(key_ ^ mix(key + 0x8BB84B93962EACC9ull)));
  }

  double uniform() {
    std::uniform_real_distribution<double> d(0.0, 1.0);
    return d(engine_);
  }
  double uniform(double a, double b) {
    std::uniform_real_distribution<double> d(a, b);
    return d(engine_);
  }
  double normal() {
    std::normal_distribution<double> d(0.0, 1.0);
    return d(engine_);
  }
  double normal(double mean, double sd) {
    std::normal_distribution<double> d(mean, sd);
    return d(engine_);
  }
  std::uint64_t poisson(double mean) {
    if (mean <= 0.0) return 0;
    std::poisson_distribution<std::uint64_t> d(mean);
    return d(engine_);
  }
  double exponential(double rate) {
    std::exponential_distribution<double> d(rate);
    return d(engine_);
  }
  double gamma(double shape, double scale) {
    std::gamma_distribution<double> d(shape, scale);
    return d(engine_);
  }
  double beta(double alpha, double b) {
    double x = gamma(alpha, 1.0);
    double y = gamma(b, 1.0);
    return x / (x + y);
  }
  std::size_t uniform_index(std::size_t n) {
    std::uniform_int_distribution<std::size_t> d(0, n - 1);
    return d(engine_);
  }

 private:
  struct FromKey {};
  RngStream(FromKey, std::uint64_t key) : key_(key) {
    engine_.seed(mix(key_ ^ 0xA0761D6478BD642Full));
  }

  // splitmix64 finalizer
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

  std::uint64_t key_;
  std::mt19937_64 engine_;
};

}  // namespace pdr
