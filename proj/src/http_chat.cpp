#include "collapse_lab/http_chat.hpp"

#include <httplib.h>

#include <cmath>
#include <cstdlib>

#include "collapse_lab/errors.hpp"

namespace clab::http {

std::string extract_text(const nlohmann::json& r) {
    if (!r.is_object()) throw ProtocolError("response is not a JSON object");
    if (auto it = r.find("text"); it != r.end() && it->is_string()) return it->get<std::string>();
    if (auto it = r.find("content"); it != r.end() && it->is_string()) return it->get<std::string>();
    if (auto it = r.find("choices"); it != r.end() && it->is_array() && !it->empty()) {
        const auto& c = (*it)[0];
        if (c.contains("message") && c["message"].is_object() && c["message"].contains("content") &&
            c["message"]["content"].is_string())
            return c["message"]["content"].get<std::string>();
        if (c.contains("text") && c["text"].is_string()) return c["text"].get<std::string>();
    }
    throw ProtocolError("response carries no completion text");
}

std::string post_chat(const Endpoint& ep, const nlohmann::json& body) {
    httplib::Client cli(ep.base_url);
    if (!cli.is_valid()) throw TransportError("invalid endpoint address '" + ep.base_url + "'");
    const auto secs = static_cast<time_t>(std::floor(ep.timeout_seconds));
    const auto usecs = static_cast<time_t>((ep.timeout_seconds - std::floor(ep.timeout_seconds)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (ep.bearer_token) headers.emplace("Authorization", "Bearer " + *ep.bearer_token);

    auto res = cli.Post(ep.path, headers, body.dump(), "application/json");
    if (!res) throw TransportError("request to " + ep.base_url + ep.path + " failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
        throw TransportError("endpoint " + ep.base_url + ep.path + " returned HTTP " + std::to_string(res->status));
    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
        throw ProtocolError(std::string("malformed JSON response: ") + e.what());
    }
    return extract_text(parsed);
}

std::optional<std::string> token_from_env(const std::string& var) {
    if (var.empty()) return std::nullopt;
    const char* v = std::getenv(var.c_str());
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

} // namespace clab::http
