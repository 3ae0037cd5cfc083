#pragma once

#include <stdexcept>
#include <string>

namespace fmgl {

enum class ErrorKind {
  parameter,   // invalid user-supplied parameter (lambda, sizes, seeds)
  structural,  // shape mismatch between inputs
  data,        // non-finite or otherwise unusable numbers, unreadable files
  numerical,   // factorization or line-search breakdown
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& what)
      : Error(ErrorKind::parameter, what) {}
};

class StructuralError : public Error {
 public:
  explicit StructuralError(const std::string& what)
      : Error(ErrorKind::structural, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error(ErrorKind::numerical, what) {}
};

/// Cholesky factorization failed: the matrix is not positive definite.
class NotPositiveDefinite : public NumericalError {
 public:
  explicit NotPositiveDefinite(const std::string& what) : NumericalError(what) {}
};

class LineSearchFailure : public NumericalError {
 public:
  explicit LineSearchFailure(const std::string& what) : NumericalError(what) {}
};

}  // namespace fmgl
