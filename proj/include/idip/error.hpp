#pragma once

#include <stdexcept>
#include <string>

namespace idip {

/// Operand shapes do not satisfy an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Misuse of a gradient tape (non-scalar loss, consumed tape, foreign tensor).
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Image or mask decoding/encoding failure.
class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Session state does not permit the requested operation right now.
class SessionStateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Optimization hit a non-finite loss; parameters were rolled back.
class OptimizationAborted : public std::runtime_error {
 public:
  OptimizationAborted(const std::string& what, int iteration)
      : std::runtime_error(what), iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

}  // namespace idip
