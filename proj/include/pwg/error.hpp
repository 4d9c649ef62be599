#pragma once

#include <stdexcept>
#include <string>

namespace pwg {

// Base for every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Bad argument or shape passed to an operation.
class ArgumentError : public Error {
  public:
    using Error::Error;
};

// A domain type invariant does not hold. `field()` names the offending field.
class ValidationError : public Error {
  public:
    ValidationError(std::string field, const std::string &what)
        : Error(field + ": " + what), field_(std::move(field)) {}
    const std::string &field() const { return field_; }

  private:
    std::string field_;
};

// Reading or writing a container failed.
class IoError : public Error {
  public:
    IoError(std::string path, const std::string &what)
        : Error(path + ": " + what), path_(std::move(path)) {}
    const std::string &path() const { return path_; }

  private:
    std::string path_;
};

// Model state does not fit the requested operation (wrong provenance, layout mismatch).
class StateError : public Error {
  public:
    using Error::Error;
};

}  // namespace pwg
