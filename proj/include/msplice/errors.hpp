#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace msplice {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidKernel : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class TagMismatch : public Error {
 public:
  using Error::Error;
};

/// Chapman-Kolmogorov failure on a supplied time grid.
class SemigroupViolation : public Error {
 public:
  SemigroupViolation(double s, double t, double deviation)
      : Error("semigroup violation at (s=" + std::to_string(s) + ", t=" + std::to_string(t) +
              "): deviation " + std::to_string(deviation)),
        s_(s),
        t_(t),
        deviation_(deviation) {}
  double s() const { return s_; }
  double t() const { return t_; }
  double deviation() const { return deviation_; }

 private:
  double s_, t_, deviation_;
};

class PathBlowup : public Error {
 public:
  explicit PathBlowup(double time)
      : Error("non-finite diffusion value at t=" + std::to_string(time)), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

class RateBoundError : public Error {
 public:
  RateBoundError(double value, double bound)
      : Error("rate " + std::to_string(value) + " outside [0, " + std::to_string(bound) + "]"),
        value_(value) {}
  double value() const { return value_; }

 private:
  double value_;
};

class EstimatorAbort : public Error {
 public:
  explicit EstimatorAbort(double value)
      : Error("test function out of declared bound: " + std::to_string(value)), value_(value) {}
  double value() const { return value_; }

 private:
  double value_;
};

class ConfigurationError : public Error {
 public:
  using Error::Error;
};

class ZeroLifetime : public Error {
 public:
  using Error::Error;
};

class NoUniqueInvariant : public Error {
 public:
  using Error::Error;
};

class KeyMismatch : public Error {
 public:
  using Error::Error;
};

class DegenerateInput : public Error {
 public:
  using Error::Error;
};

/// A theorem check whose numerical evidence fell outside tolerance. Carries
/// the report that produced the verdict.
template <class Report>
class CheckFailure : public Error {
 public:
  CheckFailure(std::string what, Report report) : Error(std::move(what)), report_(std::move(report)) {}
  const Report& report() const { return report_; }

 private:
  Report report_;
};

class SchemaError : public Error {
 public:
  SchemaError(std::string path, const std::string& message)
      : Error(path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace msplice
