#include "dstyle/wire.hpp"

#include "dstyle/errors.hpp"

#include <fmt/format.h>
#include <httplib.h>
#include <openssl/evp.h>

#include <bit>
#include <charconv>
#include <cstring>
#include <thread>

namespace dstyle {

static_assert(std::endian::native == std::endian::little, "wire buffers assume a little-endian host");

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) {
        throw BackendError(fmt::format("base64 length {} is not a multiple of 4", text.size()));
    }
    std::vector<std::uint8_t> out(3 * (text.size() / 4));
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                  static_cast<int>(text.size()));
    if (n < 0) {
        throw BackendError("malformed base64 payload");
    }
    // EVP_DecodeBlock keeps the bytes produced by '=' padding.
    std::size_t pad = 0;
    for (auto it = text.rbegin(); it != text.rend() && *it == '=' && pad < 2; ++it) {
        ++pad;
    }
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

std::string encode_floats(std::span<const float> values) {
    return base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(values.data()), values.size_bytes()));
}

std::vector<float> decode_floats(std::string_view text, std::size_t expected_count, std::string_view field) {
    const auto bytes = base64_decode(text);
    if (bytes.size() != expected_count * sizeof(float)) {
        throw BackendError(fmt::format("{}: expected {} float32 values, got {} bytes", field, expected_count,
                                       bytes.size()));
    }
    std::vector<float> out(expected_count);
    std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

Endpoint parse_endpoint(std::string_view url) {
    constexpr std::string_view scheme = "http://";
    if (!url.starts_with(scheme)) {
        throw ConfigError(fmt::format("endpoint '{}' must start with http://", url));
    }
    std::string_view rest = url.substr(scheme.size());
    Endpoint ep;
    const auto slash = rest.find('/');
    if (slash != std::string_view::npos) {
        ep.prefix = std::string(rest.substr(slash));
        while (!ep.prefix.empty() && ep.prefix.back() == '/') {
            ep.prefix.pop_back();
        }
        rest = rest.substr(0, slash);
    }
    const auto colon = rest.rfind(':');
    if (colon != std::string_view::npos) {
        const std::string_view port = rest.substr(colon + 1);
        const auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), ep.port);
        if (ec != std::errc{} || ptr != port.data() + port.size() || ep.port <= 0 || ep.port > 65535) {
            throw ConfigError(fmt::format("endpoint '{}' has an invalid port", url));
        }
        rest = rest.substr(0, colon);
    }
    if (rest.empty()) {
        throw ConfigError(fmt::format("endpoint '{}' has no host", url));
    }
    ep.host = std::string(rest);
    return ep;
}

JsonClient::JsonClient(std::string url, RetryPolicy policy)
    : url_(std::move(url)), endpoint_(parse_endpoint(url_)), policy_(policy) {}

namespace {

nlohmann::json parse_body(const std::string& body, const std::string& where) {
    try {
        return nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
        throw BackendError(fmt::format("{}: response is not JSON ({})", where, e.what()));
    }
}

std::string error_detail(const httplib::Result& res) {
    if (!res) {
        return httplib::to_string(res.error());
    }
    std::string body = res->body.substr(0, 200);
    return fmt::format("HTTP {} {}", res->status, body);
}

} // namespace

nlohmann::json JsonClient::post(std::string_view path, const nlohmann::json& body) const {
    const std::string full = endpoint_.prefix + std::string(path);
    const std::string where = url_ + std::string(path);
    const std::string payload = body.dump();
    auto backoff = std::chrono::duration<double, std::milli>(policy_.initial_backoff);
    std::string last_error;
    for (int attempt = 0; attempt <= policy_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(backoff);
            backoff *= policy_.backoff_factor;
        }
        httplib::Client client(endpoint_.host, endpoint_.port);
        client.set_connection_timeout(policy_.connect_timeout);
        client.set_read_timeout(policy_.read_timeout);
        auto res = client.Post(full, payload, "application/json");
        if (res && res->status >= 200 && res->status < 300) {
            return parse_body(res->body, where);
        }
        last_error = error_detail(res);
        if (res && res->status >= 400 && res->status < 500) {
            break;
        }
    }
    throw BackendError(fmt::format("POST {} failed: {}", where, last_error));
}

nlohmann::json JsonClient::get_once(std::string_view path) const {
    const std::string where = url_ + std::string(path);
    httplib::Client client(endpoint_.host, endpoint_.port);
    client.set_connection_timeout(policy_.connect_timeout);
    client.set_read_timeout(policy_.connect_timeout);
    auto res = client.Get(endpoint_.prefix + std::string(path));
    if (!res || res->status < 200 || res->status >= 300) {
        throw BackendError(fmt::format("GET {} failed: {}", where, error_detail(res)));
    }
    return parse_body(res->body, where);
}

} // namespace dstyle
