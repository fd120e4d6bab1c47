#pragma once

#include <stdexcept>
#include <string>

namespace striprw {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent shapes among P, Q, R or across layers.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Invalid law, config file or parameter.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// (I - R - Q psi) singular or an ellipticity bound violated during a solve.
class EllipticityError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ContractionError : public NumericError {
 public:
  using NumericError::NumericError;
};

class PositivityError : public NumericError {
 public:
  using NumericError::NumericError;
};

// The computation needs layers beyond the supplied window. `extra_layers` is
// a lower estimate of how many more are required; `left` says which side.
class NeedsWiderWindow : public Error {
 public:
  NeedsWiderWindow(const std::string& what, long extra_layers, bool left)
      : Error(what), extra_layers_(extra_layers), left_(left) {}
  long extra_layers() const { return extra_layers_; }
  bool left() const { return left_; }

 private:
  long extra_layers_;
  bool left_;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class OutOfRegime : public Error {
 public:
  using Error::Error;
};

}  // namespace striprw
