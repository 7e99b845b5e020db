#pragma once

#include <stdexcept>
#include <string>

namespace mvseg {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or grid dimensions that are zero, overflow, or disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidDepthError : public Error {
 public:
  using Error::Error;
};

class InvalidLabelError : public Error {
 public:
  using Error::Error;
};

/// A metric whose denominator is empty (no evaluated pixels).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// A training or evaluation sample that carries no usable pixels or frames.
class DegenerateSampleError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// File contents do not follow the expected format (bad magic, truncation,
/// malformed line). Messages carry the byte offset or line number.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// No trajectory entry close enough in time to a requested timestamp.
class AssociationError : public Error {
 public:
  using Error::Error;
};

class NonFiniteGradientError : public Error {
 public:
  using Error::Error;
};

}  // namespace mvseg
