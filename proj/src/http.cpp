#include "dreambox/http.hpp"

#include "dreambox/error.hpp"

#include <httplib.h>

namespace dreambox {

Endpoint parse_endpoint(std::string_view url)
{
  const auto scheme = url.find("://");
  if (scheme == std::string_view::npos)
    throw ConfigError("endpoint must include a scheme, got '" + std::string(url) + "'");
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string_view::npos)
    return {std::string(url), "/"};
  return {std::string(url.substr(0, slash)), std::string(url.substr(slash))};
}

nlohmann::json post_json(const Endpoint& endpoint, const nlohmann::json& body, std::chrono::milliseconds timeout,
                         int retries, const std::string& stage)
{
  httplib::Client client(endpoint.base);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  const std::string payload = body.dump();

  std::string last_error;
  for (int attempt = 0; attempt <= retries; ++attempt) {
    auto res = client.Post(endpoint.path, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw ContractError(endpoint.base + endpoint.path + " replied with invalid JSON: " + e.what(), stage);
    }
  }
  throw TransportError(endpoint.base + endpoint.path + " unreachable after " + std::to_string(retries + 1) +
                         " attempt(s): " + last_error,
                       stage);
}

} // namespace dreambox
