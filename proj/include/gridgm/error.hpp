#pragma once

#include <stdexcept>
#include <string>

namespace gridgm {

/// Input rejected before any numerical work (bad file, broken invariant).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// A computation could not proceed: singular matrix, lost definiteness,
/// solver did not converge.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gridgm
