#include "http_client.hpp"

#include <chrono>
#include <thread>

#include <httplib.h>

#include "bilevel/errors.hpp"

namespace bilevel {

namespace {

long long now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

JsonHttpClient::JsonHttpClient(std::string endpoint, std::string api_key, int timeout_ms,
                               double max_requests_per_second, int max_retries)
    : endpoint_(std::move(endpoint)),
      api_key_(std::move(api_key)),
      timeout_ms_(timeout_ms),
      max_retries_(max_retries) {
  if (endpoint_.empty()) throw ConfigError("remote endpoint is empty");
  std::string rest;
  if (endpoint_.rfind("http://", 0) == 0) {
    rest = endpoint_.substr(7);
  } else {
    throw ConfigError("remote endpoint must start with http:// (got '" + endpoint_ + "')");
  }
  const auto slash = rest.find('/');
  std::string hostport = rest.substr(0, slash);
  if (slash != std::string::npos) {
    base_path_ = rest.substr(slash);
    if (base_path_ == "/") base_path_.clear();
  }
  const auto colon = hostport.find(':');
  if (colon == std::string::npos) {
    host_ = hostport;
  } else {
    host_ = hostport.substr(0, colon);
    port_ = std::stoi(hostport.substr(colon + 1));
  }
  if (host_.empty()) throw ConfigError("remote endpoint has no host: '" + endpoint_ + "'");
  if (max_requests_per_second > 0.0) {
    min_interval_ms_ = 1000.0 / max_requests_per_second;
  }
}

void JsonHttpClient::throttle() {
  if (min_interval_ms_ <= 0.0) return;
  const long long now = now_ms();
  const long long wait = static_cast<long long>(min_interval_ms_) - (now - last_request_ms_);
  if (last_request_ms_ != 0 && wait > 0) {
    std::this_thread::sleep_for(std::chrono::milliseconds(wait));
  }
  last_request_ms_ = now_ms();
}

nlohmann::json JsonHttpClient::post_json(const std::string& path, const nlohmann::json& body) {
  httplib::Client client(host_, port_);
  client.set_connection_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);
  client.set_read_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);

  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  const std::string payload = body.dump();
  const std::string url = base_path_ + path;

  for (int attempt = 0;; ++attempt) {
    throttle();
    auto res = client.Post(url, headers, payload, "application/json");
    if (!res) {
      if (attempt < max_retries_) continue;
      throw RemoteError("POST " + endpoint_ + path + " failed: " +
                        httplib::to_string(res.error()));
    }
    if (res->status == 429 || res->status >= 500) {
      if (attempt < max_retries_) {
        std::this_thread::sleep_for(std::chrono::milliseconds(200 * (1 << attempt)));
        continue;
      }
      throw RemoteError("POST " + endpoint_ + path + " failed with status " +
                        std::to_string(res->status) + " after retries");
    }
    if (res->status < 200 || res->status >= 300) {
      throw RemoteError("POST " + endpoint_ + path + " failed with status " +
                        std::to_string(res->status) + ": " + res->body);
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
      throw ProtocolError("POST " + endpoint_ + path + " returned non-JSON body: " +
                          std::string(e.what()));
    }
  }
}

}  // namespace bilevel
