#pragma once

#include <cstdint>
#include <random>

#include "dsdpg/tensor.hpp"

namespace dsdpg {

// All randomness flows through explicitly seeded streams. Sub-streams are
// derived from the parent seed with a splitmix hash so parallel components
// never share state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  // Independent stream keyed by id; deterministic in (seed, id).
  Rng stream(std::uint64_t id) const {
    std::uint64_t x = seed_ + 0x9e3779b97f4a7c15ull * (id + 1);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return Rng(x);
  }

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(gen_);
  }
  double normal(double mean = 0.0, double std = 1.0) {
    return std::normal_distribution<double>(mean, std)(gen_);
  }
  std::uint64_t next_u64() { return gen_(); }
  // uniform integer in [0, n)
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(gen_);
  }

  Tensor normal_tensor(std::size_t rows, std::size_t cols, double std = 1.0) {
    Tensor t(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = normal(0.0, std);
    return t;
  }
  Tensor uniform_tensor(std::size_t rows, std::size_t cols, double lo, double hi) {
    Tensor t(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = uniform(lo, hi);
    return t;
  }

  std::uint64_t seed() const { return seed_; }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace dsdpg
