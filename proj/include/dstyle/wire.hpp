#pragma once

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dstyle {

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws BackendError on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Little-endian float32 payloads, as carried by the *_b64 fields.
std::string encode_floats(std::span<const float> values);
std::vector<float> decode_floats(std::string_view text, std::size_t expected_count, std::string_view field);

struct RetryPolicy {
    int max_retries = 3; // after the first attempt
    std::chrono::milliseconds initial_backoff{250};
    double backoff_factor = 2.0;
    std::chrono::seconds connect_timeout{5};
    std::chrono::seconds read_timeout{300};
};

/// Parsed "http://host:port[/prefix]".
struct Endpoint {
    std::string host;
    int port = 80;
    std::string prefix;
};

Endpoint parse_endpoint(std::string_view url);

/// Blocking JSON client. Transport failures and 5xx responses are retried
/// with exponential backoff; 4xx responses fail immediately.
class JsonClient {
public:
    explicit JsonClient(std::string url, RetryPolicy policy = {});

    nlohmann::json post(std::string_view path, const nlohmann::json& body) const;
    /// Single attempt with the connect timeout as read timeout.
    nlohmann::json get_once(std::string_view path) const;

    const std::string& url() const { return url_; }
    const RetryPolicy& policy() const { return policy_; }

private:
    std::string url_;
    Endpoint endpoint_;
    RetryPolicy policy_;
};

} // namespace dstyle
