#pragma once

#include <stdexcept>
#include <string>

namespace ssnmf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Inconsistency between internal representations (e.g. a one-sided spectrum
/// whose DC bin carries imaginary energy).
class InternalConsistency : public Error {
 public:
  using Error::Error;
};

class DegenerateProfile : public Error {
 public:
  using Error::Error;
};

class DegenerateComponent : public Error {
 public:
  using Error::Error;
};

class UndefinedShift : public Error {
 public:
  using Error::Error;
};

class Divergence : public Error {
 public:
  Divergence(const std::string& what, std::size_t iteration)
      : Error(what), iteration_(iteration) {}
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

class DegenerateInit : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class EmptyData : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ssnmf
