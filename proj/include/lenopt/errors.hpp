#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lenopt {

/// Shapes of operands do not fit together.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A scalar parameter is outside its admissible range.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A call violated a documented precondition of the API.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A length configuration breaks one of its inequalities.
class ConstraintError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class VocabularyError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class LengthError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Malformed text input. `offset` is the character position of the problem.
class ParseError : public std::invalid_argument {
 public:
  ParseError(const std::string& message, std::size_t offset)
      : std::invalid_argument(message + " (at offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// A loss or activation became NaN/Inf during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be read, written or decoded.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lenopt
