#pragma once

#include <stdexcept>
#include <string>

namespace detox {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyText : public Error {
 public:
  EmptyText() : Error("empty text") {}
};

class LengthMismatch : public Error {
 public:
  LengthMismatch(std::size_t a, std::size_t b)
      : Error("token count mismatch: " + std::to_string(a) + " vs " + std::to_string(b)) {}
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class IdenticalTexts : public Error {
 public:
  IdenticalTexts() : Error("counterfactual is identical to the original text") {}
};

class BackendError : public Error {
 public:
  using Error::Error;
};

class CapabilityUnavailable : public BackendError {
 public:
  explicit CapabilityUnavailable(const std::string& capability)
      : BackendError("backend capability unavailable: " + capability) {}
};

class ConnectError : public BackendError {
 public:
  using BackendError::BackendError;
};

class VersionMismatch : public BackendError {
 public:
  using BackendError::BackendError;
};

/// Server response failed schema validation. Carries the raw payload.
class ProtocolError : public BackendError {
 public:
  ProtocolError(const std::string& what, std::string payload)
      : BackendError(what), payload_(std::move(payload)) {}
  const std::string& payload() const noexcept { return payload_; }

 private:
  std::string payload_;
};

class InputNotToxic : public Error {
 public:
  InputNotToxic() : Error("input is not classified toxic") {}
};

class NoCounterfactualFound : public Error {
 public:
  using Error::Error;
};

class EmptyCorpus : public Error {
 public:
  EmptyCorpus() : Error("empty corpus") {}
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataFileError : public Error {
 public:
  using Error::Error;
};

}  // namespace detox
