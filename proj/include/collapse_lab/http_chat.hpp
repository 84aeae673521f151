#pragma once

#include <optional>
#include <string>

#include <json.hpp>

namespace clab::http {

struct Endpoint {
    std::string base_url; // scheme://host[:port]
    std::string path = "/v1/chat/completions";
    double timeout_seconds = 60.0;
    std::optional<std::string> bearer_token;
};

// POSTs a JSON body and returns the completion text. Accepts responses of the
// form {"text": ...}, {"content": ...}, {"choices":[{"message":{"content":...}}]}
// or {"choices":[{"text": ...}]}.
// Throws TransportError for connection failures, timeouts and non-2xx status;
// ProtocolError for malformed bodies.
std::string post_chat(const Endpoint& ep, const nlohmann::json& body);

std::string extract_text(const nlohmann::json& response);

// Reads a bearer token from the named environment variable; empty name or
// unset variable yields nullopt.
std::optional<std::string> token_from_env(const std::string& var);

} // namespace clab::http
