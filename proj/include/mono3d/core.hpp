#pragma once

// Shared error types and small numeric helpers used by every module.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mono3d {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Raised for violated preconditions (bad shapes, degenerate inputs, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a file or text record cannot be decoded. Carries the 1-based
// line number when one is meaningful (0 otherwise).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Raised when an internal invariant (e.g. gated/dense equivalence) breaks.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Wraps an angle into [-pi, pi).
inline double wrap_angle(double theta) {
  double r = std::remainder(theta, kTwoPi);
  if (r >= kPi) r -= kTwoPi;
  return r;
}

// Smallest signed difference a - b on the circle, in [-pi, pi).
inline double angle_diff(double a, double b) { return wrap_angle(a - b); }

inline void require(bool cond, const char* msg) {
  if (!cond) throw InvalidArgument(msg);
}

}  // namespace mono3d
