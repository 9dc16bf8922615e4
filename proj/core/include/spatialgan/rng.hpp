#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace spatialgan {

// Source of normal draws. Samplers take this interface so tests can script
// exact draws.
class NormalSource {
 public:
  virtual ~NormalSource() = default;
  virtual double normal(double mean, double stddev) = 0;
};

// Seeded, serializable random stream. Every stochastic component of the
// library draws from one of these so runs are reproducible and resumable.
class Rng final : public NormalSource {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double normal(double mean, double stddev) override {
    return normal_(engine_, std::normal_distribution<double>::param_type(mean, stddev));
  }
  double uniform(double lo, double hi) {
    return uniform_(engine_, std::uniform_real_distribution<double>::param_type(lo, hi));
  }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }
  std::uint64_t next_u64() { return engine_(); }

  // Derive an independent stream, e.g. one per subsystem.
  Rng split() { return Rng(engine_() ^ 0x9E3779B97F4A7C15ULL); }

  std::string state() const;
  void set_state(const std::string& state);

  bool operator==(const Rng& other) const { return state() == other.state(); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
  std::uniform_real_distribution<double> uniform_;
};

}  // namespace spatialgan
