#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <functional>
#include <random>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "sema/error.hpp"

namespace sema {

/// "scheme://host[:port][/base]" split into what httplib needs.
struct Endpoint {
    std::string origin;     // scheme://host:port
    std::string base_path;  // no trailing slash, may be empty

    static Endpoint parse(const std::string& url) {
        const auto scheme_end = url.find("://");
        if (url.empty() || scheme_end == std::string::npos) {
            throw ContractError("endpoint URL must look like http://host:port, got '" + url + "'");
        }
        const auto scheme = url.substr(0, scheme_end);
        if (scheme != "http" && scheme != "https") {
            throw ContractError("unsupported endpoint scheme '" + scheme + "'");
        }
        const auto path_start = url.find('/', scheme_end + 3);
        Endpoint e;
        e.origin = url.substr(0, path_start);
        if (path_start != std::string::npos) e.base_path = url.substr(path_start);
        while (!e.base_path.empty() && e.base_path.back() == '/') e.base_path.pop_back();
        if (e.origin.size() <= scheme.size() + 3) throw ContractError("endpoint URL has no host: " + url);
        return e;
    }

    std::string path(const std::string& suffix) const { return base_path + suffix; }
};

struct RetryPolicy {
    int max_retries = 3;
    double timeout_s = 120.0;
    double backoff_base_s = 1.0;
    double backoff_cap_s = 30.0;
};

/// Full-jitter exponential backoff: uniform in [0, min(cap, base * 2^attempt)].
inline std::chrono::duration<double> backoff_delay(const RetryPolicy& policy, int attempt) {
    thread_local std::mt19937_64 rng{std::random_device{}()};
    const double ceiling =
        std::min(policy.backoff_cap_s, policy.backoff_base_s * std::ldexp(1.0, attempt));
    std::uniform_real_distribution<double> dist(0.0, std::max(0.0, ceiling));
    return std::chrono::duration<double>(dist(rng));
}

struct HttpReply {
    int status = 0;
    std::string body;
};

/// POSTs JSON, retrying connection failures, 429 and 5xx. Other statuses are
/// returned to the caller. `on_attempt` runs before every network attempt.
inline HttpReply post_json(const Endpoint& endpoint, const std::string& path, const nlohmann::json& body,
                           const RetryPolicy& policy, const httplib::Headers& headers = {},
                           const std::function<void()>& on_attempt = {}) {
    const auto payload = body.dump();
    std::string last_error;
    for (int attempt = 0; attempt <= policy.max_retries; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(backoff_delay(policy, attempt - 1));
        if (on_attempt) on_attempt();
        httplib::Client client(endpoint.origin);
        const auto seconds = static_cast<time_t>(policy.timeout_s);
        const auto micros = static_cast<time_t>((policy.timeout_s - static_cast<double>(seconds)) * 1e6);
        client.set_connection_timeout(seconds, micros);
        client.set_read_timeout(seconds, micros);
        client.set_write_timeout(seconds, micros);
        auto res = client.Post(endpoint.path(path), headers, payload, "application/json");
        if (!res) {
            last_error = "connection failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        return {res->status, res->body};
    }
    throw TransportError(endpoint.origin + endpoint.path(path) + ": " + last_error + " after " +
                         std::to_string(policy.max_retries) + " retries");
}

}  // namespace sema
