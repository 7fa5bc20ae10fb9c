#pragma once

#include <stdexcept>
#include <string>

namespace cflab {

/// Malformed input data or configuration. The CLI maps this to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure inside a computation (simulation, objective, optimizer). Exit code 3.
class ComputeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A car-following law was evaluated outside its domain, e.g. a non-positive
/// space headway in the GHR denominator.
class ModelDomainError : public ComputeError {
 public:
  using ComputeError::ComputeError;
};

inline double kmh_to_mps(double kmh) { return kmh / 3.6; }
inline double mps_to_kmh(double mps) { return mps * 3.6; }

}  // namespace cflab
