#include "intentkit/llm.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "intentkit/error.hpp"
#include "intentkit/rng.hpp"

namespace intentkit {

using nlohmann::json;

void check_request(const ChatRequest& req) {
    if (req.system_prompt.empty() && req.user_prompt.empty()) throw ConfigError("chat request has empty prompts");
    if (!std::isfinite(req.temperature) || req.temperature < 0.0 || req.temperature > 2.0)
        throw ConfigError("temperature must be finite and within [0, 2]");
    if (req.max_output_tokens <= 0) throw ConfigError("max_output_tokens must be positive");
}

namespace network {
namespace {
std::atomic<bool> g_denied{false};
std::atomic<std::uint64_t> g_attempts{0};
}  // namespace

void deny(bool denied) { g_denied = denied; }
bool denied() { return g_denied.load(); }
std::uint64_t attempts() { return g_attempts.load(); }
void reset_attempts() { g_attempts = 0; }
void note_attempt() { ++g_attempts; }
}  // namespace network

// ---- mock ----------------------------------------------------------------------------------

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

[[noreturn]] void throw_scripted_error(const std::string& kind) {
    if (kind == "rate_limit") throw TransportError("HTTP 429 (scripted)", true);
    if (kind == "server_error") throw TransportError("HTTP 500 (scripted)", true);
    if (kind == "timeout") throw TransportError("timeout (scripted)", true);
    if (kind == "auth") throw AuthError("HTTP 401 (scripted)");
    if (kind == "bad_request") throw TransportError("HTTP 400 (scripted)", false);
    throw ConfigError("unknown scripted error kind: " + kind);
}

}  // namespace

std::unique_ptr<MockBackend> MockBackend::from_file(const std::string& path) {
    auto dir = std::filesystem::path(path).parent_path().string();
    return from_json_text(read_file(path), dir.empty() ? "." : dir);
}

std::unique_ptr<MockBackend> MockBackend::from_json_text(const std::string& text, const std::string& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("mock script is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("entries") || !j["entries"].is_array())
        throw ConfigError("mock script needs an \"entries\" array");
    auto mock = std::make_unique<MockBackend>();
    if (j.contains("model")) mock->model_ = j["model"].get<std::string>();
    for (const auto& e : j["entries"]) {
        Entry entry;
        entry.tag = e.value("tag", "");
        entry.contains = e.value("contains", "");
        entry.repeat = e.value("repeat", 1);
        if (e.contains("response")) {
            entry.response = e["response"].get<std::string>();
        } else if (e.contains("response_file")) {
            entry.response = read_file((std::filesystem::path(base_dir) / e["response_file"].get<std::string>()).string());
        } else if (e.contains("error")) {
            entry.error = e["error"].get<std::string>();
        } else {
            throw ConfigError("mock script entry without response, response_file or error");
        }
        mock->entries_.push_back(std::move(entry));
    }
    if (mock->entries_.empty()) throw ConfigError("mock script has no entries");
    return mock;
}

void MockBackend::add(Entry entry) {
    std::lock_guard lock(mutex_);
    entries_.push_back(std::move(entry));
}

void MockBackend::add_responder(Responder responder) {
    std::lock_guard lock(mutex_);
    responders_.push_back(std::move(responder));
}

ChatResponse MockBackend::send(const ChatRequest& req) {
    std::lock_guard lock(mutex_);
    requests_.push_back(req);
    const auto haystack = req.system_prompt + "\n" + req.user_prompt;
    for (auto& e : entries_) {
        if (!e.tag.empty() && e.tag != req.request_tag) continue;
        if (!e.contains.empty() && haystack.find(e.contains) == std::string::npos) continue;
        if (e.repeat > 0 && e.used >= e.repeat) continue;
        ++e.used;
        if (!e.error.empty()) throw_scripted_error(e.error);
        return {*e.response, {}, std::chrono::milliseconds(0)};
    }
    for (const auto& r : responders_)
        if (auto text = r(req)) return {*text, {}, std::chrono::milliseconds(0)};
    throw UnscriptedRequest("no scripted response for request tagged '" + req.request_tag + "'");
}

std::size_t MockBackend::calls() const {
    std::lock_guard lock(mutex_);
    return requests_.size();
}

std::vector<ChatRequest> MockBackend::requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
}

// ---- client --------------------------------------------------------------------------------

std::chrono::milliseconds RetryPolicy::delay(int retry) const {
    double ms = static_cast<double>(backoff_base.count()) * std::ldexp(1.0, std::max(0, retry - 1));
    return std::chrono::milliseconds(static_cast<std::int64_t>(std::min(ms, static_cast<double>(backoff_cap.count()))));
}

LlmClient::LlmClient(Backend& backend, AuditLog* audit, RetryPolicy policy, Sleeper sleeper)
    : backend_(backend), audit_(audit), policy_(policy), sleeper_(std::move(sleeper)) {
    if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string LlmClient::prompt_digest(const ChatRequest& req) {
    return to_hex(fnv1a64(req.system_prompt + '\x1f' + req.user_prompt));
}

TokenUsage LlmClient::usage() const {
    std::lock_guard lock(usage_mutex_);
    return usage_;
}

namespace {

std::string outcome_name(const std::exception& e) {
    if (dynamic_cast<const AuthError*>(&e)) return "auth_error";
    if (dynamic_cast<const RetriesExhausted*>(&e)) return "retries_exhausted";
    if (dynamic_cast<const UnscriptedRequest*>(&e)) return "unscripted_request";
    if (dynamic_cast<const NetworkDenied*>(&e)) return "network_denied";
    if (dynamic_cast<const TransportError*>(&e)) return "transport_error";
    return "error";
}

}  // namespace

Completion LlmClient::complete(const ChatRequest& req, const CallContext& ctx) {
    check_request(req);
    ++calls_;
    AuditRecord record;
    record.agent = ctx.agent.empty() ? req.request_tag : ctx.agent;
    record.prompt_digest = prompt_digest(req);
    record.seed = ctx.seed;
    record.model = backend_.model_id();
    record.version_before = ctx.version_before;
    record.version_after = ctx.version_before;

    auto fail = [&](const std::exception& e, int attempts) {
        if (!audit_) return;
        record.attempts = attempts;
        record.outcome = outcome_name(e);
        record.verdict = "error";
        audit_->append(record);
    };

    int attempts = 0;
    for (;;) {
        ++attempts;
        try {
            auto response = backend_.send(req);
            {
                std::lock_guard lock(usage_mutex_);
                usage_.input += response.usage.input;
                usage_.output += response.usage.output;
            }
            Completion c{std::move(response), attempts, 0};
            if (audit_) {
                record.attempts = attempts;
                record.outcome = "ok";
                c.audit_seq = audit_->open(record);
            }
            return c;
        } catch (const TransportError& e) {
            if (!e.retryable()) {
                fail(e, attempts);
                throw;
            }
            if (attempts > policy_.max_retries) {
                RetriesExhausted ex("gave up after " + std::to_string(attempts) + " attempts: " + e.what(), attempts);
                fail(ex, attempts);
                throw ex;
            }
            sleeper_(policy_.delay(attempts));
        } catch (const BackendError& e) {
            fail(e, attempts);
            throw;
        }
    }
}

void LlmClient::close(const Completion& c, const std::string& verdict, std::uint64_t version_after) {
    if (audit_ && c.audit_seq) audit_->close(c.audit_seq, verdict, version_after);
}

}  // namespace intentkit
