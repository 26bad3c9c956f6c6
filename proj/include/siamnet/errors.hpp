#pragma once

#include <stdexcept>
#include <string>

namespace siamnet {

/// Broad failure classes; the CLI maps each onto an exit code.
enum class ErrorKind {
  Usage,      ///< bad arguments or API misuse
  Data,       ///< malformed files, protocol violations, unusable datasets
  Numerical,  ///< singular inputs, degenerate batches, non-finite values
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Tensor shapes disagree; the message names the offending axis.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

/// A zero-norm feature column reached the cosine connection.
class SingularInputError : public Error {
 public:
  SingularInputError(const std::string& what, std::size_t column)
      : Error(ErrorKind::Numerical, what), column_(column) {}
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

/// Mini-batch without a positive or without a negative pair.
class DegenerateBatchError : public Error {
 public:
  explicit DegenerateBatchError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

/// All considered similarities are equal, so the Fisher denominator vanishes.
class DegenerateVarianceError : public Error {
 public:
  explicit DegenerateVarianceError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

/// Model file could not be parsed.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

/// Dataset does not satisfy the preconditions of an evaluation protocol.
class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

}  // namespace siamnet
