#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <regex>

#include <nlohmann/json.hpp>

#include "intentkit/error.hpp"
#include "intentkit/llm.hpp"

namespace intentkit {

using nlohmann::json;

HttpBackend::HttpBackend(BackendConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw ConfigError("backend endpoint is empty");
    if (config_.model.empty()) throw ConfigError("backend model is empty");
}

std::string HttpBackend::build_body(const ChatRequest& req, const std::string& model) {
    json messages = json::array();
    if (!req.system_prompt.empty()) messages.push_back({{"role", "system"}, {"content", req.system_prompt}});
    messages.push_back({{"role", "user"}, {"content", req.user_prompt}});
    json body = {
        {"model", model},
        {"messages", messages},
        {"temperature", req.temperature},
        {"max_tokens", req.max_output_tokens},
    };
    return body.dump();
}

ChatResponse HttpBackend::parse_body(const std::string& body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::parse_error& e) {
        throw TransportError(std::string("response body is not JSON: ") + e.what(), false);
    }
    const auto choices = j.find("choices");
    if (choices == j.end() || !choices->is_array() || choices->empty())
        throw TransportError("response has no choices", false);
    const auto& message = (*choices)[0].value("message", json::object());
    auto content = message.find("content");
    if (content == message.end() || !content->is_string()) throw TransportError("first choice has no text", false);
    ChatResponse out;
    out.text = content->get<std::string>();
    if (auto usage = j.find("usage"); usage != j.end() && usage->is_object()) {
        out.usage.input = usage->value("prompt_tokens", 0);
        out.usage.output = usage->value("completion_tokens", 0);
    }
    return out;
}

ChatResponse HttpBackend::send(const ChatRequest& req) {
    network::note_attempt();
    if (network::denied()) throw NetworkDenied("network access is disabled for this run");

    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(config_.endpoint, m, url_re)) throw ConfigError("malformed endpoint URL: " + config_.endpoint);
    const std::string origin = m[1];
    const std::string path = m[2].matched ? std::string(m[2]) : "/";

    const char* key = std::getenv(config_.credential_env.c_str());
    if (!key || !*key) throw AuthError("credential variable " + config_.credential_env + " is not set");

    httplib::Client client(origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout).count();
    client.set_connection_timeout(secs);
    client.set_read_timeout(secs);
    client.set_write_timeout(secs);

    httplib::Headers headers;
    if (config_.auth_style == AuthStyle::bearer)
        headers.emplace("Authorization", std::string("Bearer ") + key);
    else
        headers.emplace("api-key", key);

    const auto start = std::chrono::steady_clock::now();
    auto res = client.Post(path, headers, build_body(req, config_.model), "application/json");
    if (!res) throw TransportError("request failed: " + httplib::to_string(res.error()), true);
    const int status = res->status;
    if (status == 401 || status == 403) throw AuthError("HTTP " + std::to_string(status));
    if (status == 408 || status == 429 || status >= 500)
        throw TransportError("HTTP " + std::to_string(status), true);
    if (status != 200) throw TransportError("HTTP " + std::to_string(status), false);
    auto out = parse_body(res->body);
    out.latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
    return out;
}

}  // namespace intentkit
