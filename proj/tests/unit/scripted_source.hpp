#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "spatialgan/rng.hpp"

// Returns pre-recorded normal draws in order, ignoring mean and stddev, or
// mean + k * stddev when built from standard scores.
class ScriptedSource final : public spatialgan::NormalSource {
 public:
  enum class Kind { kRaw, kStandard };
  ScriptedSource(std::vector<double> draws, Kind kind) : draws_(std::move(draws)), kind_(kind) {}
  double normal(double mean, double stddev) override {
    if (next_ >= draws_.size()) throw std::out_of_range("script exhausted");
    const double v = draws_[next_++];
    return kind_ == Kind::kRaw ? v : mean + v * stddev;
  }
  std::size_t used() const { return next_; }

 private:
  std::vector<double> draws_;
  Kind kind_;
  std::size_t next_ = 0;
};
