#pragma once

#include <cmath>
#include <ostream>
#include <string>

namespace acceptance {

// Counts checks and reports the first few failures into the detail stream.
class Checker {
 public:
  explicit Checker(std::ostream& detail) : detail_(detail) {}

  bool operator()(bool ok, const std::string& what) {
    ++checks_;
    if (!ok) {
      if (failures_ < 6) detail_ << what << "; ";
      ++failures_;
    }
    return ok;
  }

  bool near(double actual, double expected, double tol, const std::string& what) {
    const bool ok = std::isfinite(actual) && std::abs(actual - expected) <= tol;
    return (*this)(ok, what + " = " + std::to_string(actual) + " vs " + std::to_string(expected));
  }

  // |a - b| <= tol * max(|a|, |b|) + floor; floor absorbs round-off on
  // entries that are zero up to precision.
  bool rel(double actual, double expected, double tol, const std::string& what, double floor = 1e-9) {
    const double scale = std::max(std::abs(actual), std::abs(expected));
    const bool ok = std::isfinite(actual) && std::abs(actual - expected) <= tol * scale + floor;
    return (*this)(ok, what + " = " + std::to_string(actual) + " vs " + std::to_string(expected));
  }

  bool pass() {
    detail_ << (checks_ - failures_) << "/" << checks_ << " checks";
    return failures_ == 0 && checks_ > 0;
  }

  std::ostream& detail() { return detail_; }

 private:
  std::ostream& detail_;
  int checks_ = 0;
  int failures_ = 0;
};

}  // namespace acceptance
