#pragma once

#include <stdexcept>
#include <string>

namespace jumpflow {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class SimulationError : public Error {
public:
  using Error::Error;
};

class IntegrationError : public Error {
public:
  using Error::Error;
};

class EvaluationError : public Error {
public:
  using Error::Error;
};

class RegressionError : public Error {
public:
  using Error::Error;
};

/// Invalid problem, grid or experiment configuration.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// The a priori estimate could not be formed (zero data with nonzero solution).
class BoundError : public Error {
public:
  using Error::Error;
};

} // namespace jumpflow
