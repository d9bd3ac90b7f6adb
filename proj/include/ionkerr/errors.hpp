#pragma once

#include <stdexcept>
#include <string>

namespace ionkerr {

/// Input violates a documented precondition or invariant.
class InvalidInput : public std::invalid_argument {
 public:
  explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

/// A numerical procedure could not produce a trustworthy result
/// (resonance guard, ambiguous eigenstate assignment, non-convergence).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidInput(message);
}
}  // namespace detail

}  // namespace ionkerr
