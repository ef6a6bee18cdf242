#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace skinperm {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// Raised when an admittance is requested exactly at kz = 0 for TM waves.
class SingularPoint : public Error {
public:
  using Error::Error;
};

/// Adaptive integration did not reach the requested tolerance.
class ConvergenceFailure : public Error {
public:
  ConvergenceFailure(const std::string& what, double estimate_re, double estimate_im,
                     double error_bound)
      : Error(what), estimate_re_(estimate_re), estimate_im_(estimate_im),
        error_bound_(error_bound) {}

  double estimate_real() const noexcept { return estimate_re_; }
  double estimate_imag() const noexcept { return estimate_im_; }
  double error_bound() const noexcept { return error_bound_; }

private:
  double estimate_re_;
  double estimate_im_;
  double error_bound_;
};

class DuplicateCenter : public Error {
public:
  DuplicateCenter(const std::string& what, std::size_t first, std::size_t second)
      : Error(what), first_(first), second_(second) {}
  std::size_t first() const noexcept { return first_; }
  std::size_t second() const noexcept { return second_; }

private:
  std::size_t first_;
  std::size_t second_;
};

class ConditioningError : public Error {
public:
  using Error::Error;
};

/// Structured parse error; line is 1-based, 0 when not tied to a line.
class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

class CoverageError : public Error {
public:
  using Error::Error;
};

class MalformedFile : public Error {
public:
  using Error::Error;
};

class VersionMismatch : public Error {
public:
  using Error::Error;
};

class NonMonotone : public Error {
public:
  using Error::Error;
};

class GridMismatch : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

} // namespace skinperm
