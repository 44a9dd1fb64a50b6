#pragma once

#include <stdexcept>
#include <string>

namespace samcl {

/// Root of the library's exception hierarchy.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A loss term evaluated to NaN or Inf. `term()` names the offending term.
class NumericalError : public Error {
 public:
  explicit NumericalError(std::string term)
      : Error("non-finite value in loss term '" + term + "'"), term_(std::move(term)) {}

  [[nodiscard]] const std::string& term() const noexcept { return term_; }

 private:
  std::string term_;
};

/// Malformed or inconsistent file on disk. `path()` names the file.
class FormatError : public Error {
 public:
  FormatError(std::string path, const std::string& what)
      : Error(path + ": " + what), path_(std::move(path)) {}

  [[nodiscard]] const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class EmptyBufferError : public Error {
 public:
  EmptyBufferError() : Error("memory buffer is empty") {}
};

}  // namespace samcl
