#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "intentkit/model.hpp"

namespace intentkit {

struct ChatRequest {
    std::string system_prompt;
    std::string user_prompt;
    double temperature = 0.0;
    int max_output_tokens = 4096;
    std::string request_tag;  // agent kind, e.g. "merger"
};

// Throws ConfigError when the request violates its invariants.
void check_request(const ChatRequest& req);

struct TokenUsage {
    std::int64_t input = 0;
    std::int64_t output = 0;
};

struct ChatResponse {
    std::string text;
    TokenUsage usage;
    std::chrono::milliseconds latency{0};
};

class Backend {
  public:
    virtual ~Backend() = default;
    // One attempt. Throws TransportError (retryable or not), AuthError or UnscriptedRequest.
    virtual ChatResponse send(const ChatRequest& req) = 0;
    virtual std::string model_id() const = 0;
};

enum class AuthStyle { bearer, api_key_header };

struct BackendConfig {
    std::string endpoint;  // full chat-completions URL
    std::string model;
    std::string credential_env = "INTENTKIT_API_KEY";  // name of the variable, never its value
    AuthStyle auth_style = AuthStyle::bearer;
    std::chrono::milliseconds timeout{120000};
    int max_retries = 3;
    std::chrono::milliseconds backoff_base{1000};
};

// Process-wide guard over real network traffic. Offline runs set deny(true); every HTTP attempt
// is counted whether or not it is allowed.
namespace network {
void deny(bool denied);
bool denied();
std::uint64_t attempts();
void reset_attempts();
void note_attempt();
}  // namespace network

// OpenAI-compatible chat/completions over HTTPS or HTTP.
class HttpBackend : public Backend {
  public:
    explicit HttpBackend(BackendConfig config);
    ChatResponse send(const ChatRequest& req) override;
    std::string model_id() const override { return config_.model; }

    // Wire format helpers, exposed for tests.
    static std::string build_body(const ChatRequest& req, const std::string& model);
    static ChatResponse parse_body(const std::string& body);

  private:
    BackendConfig config_;
};

// Scripted backend. Entries are consulted in order; the first one whose matchers accept the
// request and which still has uses left answers it.
class MockBackend : public Backend {
  public:
    struct Entry {
        std::string tag;       // empty matches any request_tag
        std::string contains;  // substring of system + "\n" + user; empty matches anything
        std::optional<std::string> response;
        // Instead of a response: "rate_limit", "server_error", "timeout" (retryable) or "auth".
        std::string error;
        int repeat = 1;  // 0 = unlimited
        int used = 0;
    };
    // Returns nullopt to decline the request.
    using Responder = std::function<std::optional<std::string>(const ChatRequest&)>;

    MockBackend() = default;
    explicit MockBackend(std::vector<Entry> entries) : entries_(std::move(entries)) {}

    // {"model": "...", "entries": [{"tag", "contains", "response" | "response_file" | "error",
    // "repeat"}]}. response_file paths resolve relative to the script's directory.
    static std::unique_ptr<MockBackend> from_file(const std::string& path);
    static std::unique_ptr<MockBackend> from_json_text(const std::string& text, const std::string& base_dir = ".");

    void add(Entry entry);
    void add_responder(Responder responder);
    void set_model_id(std::string id) { model_ = std::move(id); }

    ChatResponse send(const ChatRequest& req) override;
    std::string model_id() const override { return model_; }

    std::size_t calls() const;
    std::vector<ChatRequest> requests() const;

  private:
    mutable std::mutex mutex_;
    std::vector<Entry> entries_;
    std::vector<Responder> responders_;
    std::vector<ChatRequest> requests_;
    std::string model_ = "mock";
};

struct RetryPolicy {
    int max_retries = 3;
    std::chrono::milliseconds backoff_base{1000};
    std::chrono::milliseconds backoff_cap{60000};

    // Delay before retry number `retry` (1-based): base * 2^(retry-1), capped.
    std::chrono::milliseconds delay(int retry) const;
};

// Who is calling and against which taxonomy version; copied into the audit record.
struct CallContext {
    std::string agent;
    std::uint64_t seed = 0;
    std::uint64_t version_before = 0;
};

struct Completion {
    ChatResponse response;
    int attempts = 0;
    std::uint64_t audit_seq = 0;
};

// Retrying client. Every call opens one audit record; the caller closes it with the verdict once
// the action has been validated. Failed calls are recorded and closed immediately.
class LlmClient {
  public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    LlmClient(Backend& backend, AuditLog* audit, RetryPolicy policy = {}, Sleeper sleeper = {});

    Completion complete(const ChatRequest& req, const CallContext& ctx);
    void close(const Completion& c, const std::string& verdict, std::uint64_t version_after);

    const std::string model_id() const { return backend_.model_id(); }
    std::uint64_t calls() const { return calls_.load(); }
    TokenUsage usage() const;

    static std::string prompt_digest(const ChatRequest& req);

  private:
    Backend& backend_;
    AuditLog* audit_;
    RetryPolicy policy_;
    Sleeper sleeper_;
    std::atomic<std::uint64_t> calls_{0};
    mutable std::mutex usage_mutex_;
    TokenUsage usage_;
};

}  // namespace intentkit
