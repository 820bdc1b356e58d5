#pragma once

#include <stdexcept>
#include <string>

namespace sflow {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Requested dyadic level or time horizon is beyond what the store resolves.
class ResolutionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// Interval given with s > t.
class OrderingError : public Error {
 public:
  using Error::Error;
};

/// Time not representable on the grid a model composes exactly on.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// Non-finite or malformed state.
class StateError : public Error {
 public:
  using Error::Error;
};

/// A test function or observable produced a non-finite value.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// The requested construction is not certifiable by a particle method.
class UnsupportedCase : public Error {
 public:
  using Error::Error;
};

class DepthLimitError : public Error {
 public:
  using Error::Error;
};

class IterationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace sflow
