#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <string>
#include <string_view>

namespace dreambox {

struct Endpoint
{
  std::string base; ///< scheme://host[:port]
  std::string path; ///< request path, "/" when absent
};

Endpoint parse_endpoint(std::string_view url);

/// POSTs a JSON body and parses the JSON reply. Connection failures and
/// non-2xx statuses are retried `retries` times, then raised as
/// TransportError tagged with `stage`.
nlohmann::json post_json(const Endpoint& endpoint, const nlohmann::json& body, std::chrono::milliseconds timeout,
                         int retries, const std::string& stage);

} // namespace dreambox
