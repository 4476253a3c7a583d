#pragma once

#include <stdexcept>
#include <string>

namespace kpoqa {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operands live on different Fock spaces.
class SpaceMismatch : public Error {
 public:
  using Error::Error;
};

/// Bad argument or out-of-range parameter.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A monitored physical invariant (norm, trace, positivity, hermiticity)
/// drifted beyond its tolerance, or the integrator produced NaN.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

/// Energy gap too small to evaluate a transition metric.
class VanishingGap : public Error {
 public:
  using Error::Error;
};

/// A perturbative sum hit a zero denominator.
class SingularConfiguration : public Error {
 public:
  using Error::Error;
};

/// The Rabi dispersion minimum sits on the edge of the swept range.
class InconclusiveEstimate : public Error {
 public:
  using Error::Error;
};

/// Configuration document failed validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace kpoqa
