#pragma once

#include <stdexcept>
#include <string>

namespace osp {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A vector with zero norm was used where a direction is required.
class DegenerateVectorError : public Error {
public:
  using Error::Error;
};

/// Score distribution that cannot be thresholded (too few or all equal).
class DegenerateDistributionError : public Error {
public:
  using Error::Error;
};

class ShapeError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class FormatError : public Error {
public:
  using Error::Error;
};

class DataError : public Error {
public:
  using Error::Error;
};

/// Raised when a training loss stops being finite.
class DivergenceError : public Error {
public:
  using Error::Error;
};

} // namespace osp
