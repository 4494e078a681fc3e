#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mlift {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Product grid does not fit the node budget.
class SizeError : public Error {
 public:
  using Error::Error;
};

class SymmetryError : public Error {
 public:
  using Error::Error;
};

/// An internal invariant was violated (underflow, non-finite intermediate).
class InvariantError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual, int iterations)
      : Error(what), residual_(residual), iterations_(iterations) {}
  double residual() const noexcept { return residual_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

/// Kernel width cannot be represented on the grid.
class ResolutionError : public Error {
 public:
  using Error::Error;
};

/// Two algebraically equal evaluation paths disagree.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// A divisor fell below the configured floor where the numerator carries
/// mass.
class DivisionFloorError : public Error {
 public:
  using Error::Error;
};

/// Mass left the box through zero-padded convolution, or renormalization
/// had to absorb too much mass.
class MassError : public Error {
 public:
  using Error::Error;
};

class ScheduleIncompleteError : public Error {
 public:
  ScheduleIncompleteError(const std::string& what, std::vector<int> achieved)
      : Error(what), achieved_(std::move(achieved)) {}
  /// Zero-based level indices for which an admissible threshold was found.
  const std::vector<int>& achieved_levels() const noexcept { return achieved_; }

 private:
  std::vector<int> achieved_;
};

class TruncationError : public Error {
 public:
  TruncationError(const std::string& what, int deepest)
      : Error(what), deepest_(deepest) {}
  int deepest() const noexcept { return deepest_; }

 private:
  int deepest_;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

/// Generated field carries mass outside the safe core of the box.
class SupportError : public Error {
 public:
  using Error::Error;
};

/// Density perturbation drove sqrt(rho) negative.
class AmplitudeError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace mlift
