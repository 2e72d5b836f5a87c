#pragma once

// Internal helper shared by the remote embedding provider and the remote
// reasoner. Not installed; keep out of public headers.

#include <nlohmann/json.hpp>
#include <string>

namespace bilevel {

/// Thin JSON-over-HTTP POST client with bounded retries for transient
/// failures (429 and 5xx) and a minimum spacing between requests.
class JsonHttpClient {
 public:
  /// `endpoint` looks like "http://host:port" or "http://host:port/base".
  JsonHttpClient(std::string endpoint, std::string api_key, int timeout_ms,
                 double max_requests_per_second = 0.0, int max_retries = 3);

  /// POSTs `body` to base+path. Throws RemoteError on transport/status
  /// failures and ProtocolError when the response is not JSON.
  nlohmann::json post_json(const std::string& path, const nlohmann::json& body);

  const std::string& endpoint() const { return endpoint_; }

 private:
  void throttle();

  std::string endpoint_;
  std::string host_;
  int port_ = 80;
  std::string base_path_;
  std::string api_key_;
  int timeout_ms_;
  double min_interval_ms_ = 0.0;
  int max_retries_;
  long long last_request_ms_ = 0;
};

}  // namespace bilevel
