#pragma once

#include <stdexcept>
#include <string>

namespace l3s {

// Base of every error thrown by the library. The CLI maps IoError to exit
// code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside an operation's domain (bad parameter, shape mismatch).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Point at or behind the camera plane.
class BehindCameraError : public DomainError {
 public:
  using DomainError::DomainError;
};

// Zero quaternion or other degenerate algebraic input.
class DegeneracyError : public DomainError {
 public:
  using DomainError::DomainError;
};

// Rigid alignment could not be computed (size mismatch, collinear input).
class AlignmentError : public DomainError {
 public:
  using DomainError::DomainError;
};

// Inconsistent configuration, schema violation, or unusable backend setup.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Missing, unreadable, or unwritable file.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace l3s
