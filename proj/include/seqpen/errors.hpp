#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace seqpen {

/// Vector or matrix dimensions do not match the problem.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An oracle returned NaN or Inf. Carries the sample (and constraint) index.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, std::ptrdiff_t sample,
                 std::ptrdiff_t constraint = -1)
      : std::runtime_error(what), sample_(sample), constraint_(constraint) {}

  std::ptrdiff_t sample() const { return sample_; }
  std::ptrdiff_t constraint() const { return constraint_; }

 private:
  std::ptrdiff_t sample_;
  std::ptrdiff_t constraint_;
};

/// A solver produced a non-finite iterate and stopped.
class SolverAbort : public std::runtime_error {
 public:
  SolverAbort(const std::string& what, long iteration, std::ptrdiff_t coordinate,
              long outer_iteration = -1)
      : std::runtime_error(what),
        iteration_(iteration),
        coordinate_(coordinate),
        outer_iteration_(outer_iteration) {}

  long iteration() const { return iteration_; }
  std::ptrdiff_t coordinate() const { return coordinate_; }
  long outer_iteration() const { return outer_iteration_; }

 private:
  long iteration_;
  std::ptrdiff_t coordinate_;
  long outer_iteration_;
};

}  // namespace seqpen
