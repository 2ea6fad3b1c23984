#pragma once

#include <cstddef>
#include <string>

#include "detox/backend.hpp"

namespace detox::http {

struct ServerConfig {
  std::string base_url;  // e.g. "http://127.0.0.1:8080"
  int timeout_ms = 30000;
  int max_retries = 2;
  std::string api_version = "v1";
  std::size_t pool_size = 4;

  /// Throws ConfigError.
  void validate() const;
};

/// Queries GET /v1/capabilities and returns a suite whose capabilities route
/// to the server's /v1 endpoints. Optional providers are attached only when
/// advertised.
///
/// Throws ConnectError if the server is unreachable, VersionMismatch if it
/// reports another api_version, ProtocolError on malformed responses and
/// BackendError if a mandatory capability is missing.
BackendSuite connect(const ServerConfig& config);

}  // namespace detox::http
