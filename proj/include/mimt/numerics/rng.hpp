// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mimt/numerics/tensor.hpp"

namespace mimt::numerics {

// Seeded random stream. Every random decision in the toolkit comes from an
// Rng derived from the run seed, so equal seeds give equal runs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t seed() const { return seed_; }

  // Independent stream keyed by `stream`; does not advance this generator.
  Rng split(std::uint64_t stream) const { return Rng(mix(seed_ ^ mix(stream + 0x9e3779b97f4a7c15ULL))); }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  std::size_t uniform_int(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  double normal(double mean, double stddev) { return std::normal_distribution<double>(mean, stddev)(engine_); }
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    // Fisher-Yates with our own draws so the order does not depend on the
    // standard library's shuffle implementation.
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[uniform_int(i)]);
  }

  std::vector<double> normal_values(std::size_t n, double mean, double stddev) {
    std::vector<double> out(n);
    for (auto& v : out) v = normal(mean, stddev);
    return out;
  }
  std::vector<double> uniform_values(std::size_t n, double lo, double hi) {
    std::vector<double> out(n);
    for (auto& v : out) v = uniform(lo, hi);
    return out;
  }
  Tensor normal_tensor(Shape shape, double mean, double stddev) {
    const auto n = shape_size(shape);
    return Tensor::constant(std::move(shape), normal_values(n, mean, stddev));
  }
  Tensor uniform_tensor(Shape shape, double lo, double hi) {
    const auto n = shape_size(shape);
    return Tensor::constant(std::move(shape), uniform_values(n, lo, hi));
  }

  std::string state() const {
    std::ostringstream os;
    os << seed_ << ' ' << engine_;
    return os.str();
  }
  static Rng from_state(const std::string& state) {
    std::istringstream is(state);
    Rng rng;
    is >> rng.seed_ >> rng.engine_;
    if (!is) throw Error("Rng: malformed state string");
    return rng;
  }

  bool operator==(const Rng& other) const { return seed_ == other.seed_ && engine_ == other.engine_; }

  static std::uint64_t mix(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace mimt::numerics
