#pragma once

#include <stdexcept>
#include <string>

namespace bilevel {

/// Base class for every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration: bad paths, out-of-range values,
/// mismatched components. The message names the offending key or file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Transport-level failure talking to a remote service: connection refused,
/// timeout, auth rejection, non-2xx status.
class RemoteError : public Error {
 public:
  using Error::Error;
};

/// The remote service answered, but the payload does not match the expected
/// protocol shape (missing fields, wrong types, unparseable completions).
/// Distinct from RemoteError so callers can tell "retry" from "fix the model".
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// A cache-only reasoner was asked for a (key, prompt) pair with no entry.
class CacheMissError : public Error {
 public:
  using Error::Error;
};

}  // namespace bilevel
