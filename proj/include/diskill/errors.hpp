#ifndef DISKILL_ERRORS_HPP
#define DISKILL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace diskill {

/// Dimension or shape mismatch between arguments.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// NaN/inf where a finite value is required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid configuration (unknown keys, out-of-range values, bad env setup).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Checkpoint could not be read, is corrupted, or does not match the config.
struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace diskill

#endif  // DISKILL_ERRORS_HPP
