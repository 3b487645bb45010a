#pragma once

#include <stdexcept>
#include <string>

namespace lorvp {

// Every failure raised by the library derives from Error. The CLI maps the
// categories onto process exit codes (see exit_code()).
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

class DataError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

/// Violated call contract (e.g. non-scalar loss passed to backward).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked in the wrong lifecycle state (e.g. backward twice).
class StateError : public Error {
 public:
  using Error::Error;
};

class FormatError : public DataError {
 public:
  enum class Kind { kBadMagic, kVersionMismatch, kTruncated, kMalformed };

  FormatError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class VerificationError : public Error {
 public:
  using Error::Error;
};

/// Process exit code for an exception category: 2 config, 3 data/format,
/// 4 verification, 1 anything else.
inline int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return 2;
  if (dynamic_cast<const DataError*>(&e) != nullptr) return 3;
  if (dynamic_cast<const VerificationError*>(&e) != nullptr) return 4;
  return 1;
}

}  // namespace lorvp
