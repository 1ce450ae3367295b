#pragma once

#include <stdexcept>
#include <string>

namespace sema {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A precondition or invariant of an operation was violated by the caller.
class ContractError : public Error {
  public:
    using Error::Error;
};

/// Input data (manifest, image, CSV) is missing or malformed.
class DataError : public Error {
  public:
    using Error::Error;
};

/// Network failure after the configured number of retries.
class TransportError : public Error {
  public:
    using Error::Error;
};

/// The model answered, but with nothing usable.
class DegenerateResponseError : public Error {
  public:
    using Error::Error;
};

/// Offline mode and the cache has no entry for the request.
class CacheMissError : public Error {
  public:
    CacheMissError(const std::string& key, const std::string& what)
        : Error(what), key_(key) {}

    const std::string& key() const noexcept { return key_; }

  private:
    std::string key_;
};

}  // namespace sema
