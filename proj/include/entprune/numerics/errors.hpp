#pragma once

#include <stdexcept>
#include <string>

namespace entprune {

// A NaN or Inf appeared in a forward or backward value.
class NumericError : public std::runtime_error {
  public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// A documented precondition of an operation was violated by the caller.
class PreconditionError : public std::invalid_argument {
  public:
    explicit PreconditionError(const std::string& what) : std::invalid_argument(what) {}
};

class ShapeError : public PreconditionError {
  public:
    explicit ShapeError(const std::string& what) : PreconditionError(what) {}
};

// Constant outputs have no Gaussian entropy.
class DegenerateDistributionError : public NumericError {
  public:
    explicit DegenerateDistributionError(const std::string& what) : NumericError(what) {}
};

class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
inline void require(bool cond, const std::string& msg) {
    if (!cond) throw PreconditionError(msg);
}
} // namespace detail

} // namespace entprune
