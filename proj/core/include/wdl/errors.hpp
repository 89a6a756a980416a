#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wdl {

// Caller supplied something that violates a documented precondition.
class InvalidInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A computation produced a non-finite value or otherwise broke down.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::size_t iteration)
      : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_ = 0;
};

// Serialized model could not be decoded.
class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace wdl
