#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace popscope {

/// Base of every error raised by the library. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (bad window, empty input, out-of-range k).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

class StorageError : public Error {
 public:
  using Error::Error;
};

class MigrationError : public StorageError {
 public:
  using StorageError::StorageError;
};

/// Network-level failure. Carries how many attempts were made before giving up.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int status, int attempts)
      : Error(what), status_(status), attempts_(attempts) {}

  int status() const { return status_; }
  int attempts() const { return attempts_; }
  bool retryable() const { return status_ == 0 || status_ == 429 || status_ >= 500; }

 private:
  int status_;
  int attempts_;
};

/// The backend answered, but with something that violates the wire contract.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class FixtureMiss : public Error {
 public:
  FixtureMiss(const std::string& endpoint, const std::string& digest)
      : Error("replay fixture miss for " + endpoint + " request " + digest),
        digest_(digest) {}
  const std::string& digest() const { return digest_; }

 private:
  std::string digest_;
};

/// The counts backend refused the requested date window.
class WindowError : public Error {
 public:
  using Error::Error;
};

class PlanError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

}  // namespace popscope
