#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <gtest/gtest.h>

#include <cstdlib>
#include <thread>

#include <nlohmann/json.hpp>

#include "intentkit/error.hpp"
#include "intentkit/llm.hpp"
#include "test_support.hpp"

using namespace intentkit;
using namespace std::chrono_literals;

namespace {

ChatRequest req(std::string tag, std::string user = "hello") {
    ChatRequest r;
    r.system_prompt = "You are an assistant at Acme.";
    r.user_prompt = std::move(user);
    r.request_tag = std::move(tag);
    return r;
}

LlmClient::Sleeper no_sleep(std::vector<std::chrono::milliseconds>* log = nullptr) {
    return [log](std::chrono::milliseconds d) {
        if (log) log->push_back(d);
    };
}

}  // namespace

TEST(MockBackend, EchoesScriptedResponse) {
    MockBackend mock({{"", "", std::string("ok"), "", 1, 0}});
    LlmClient client(mock, nullptr, {}, no_sleep());
    EXPECT_EQ(client.complete(req("any"), {}).response.text, "ok");
}

TEST(MockBackend, MatchesTagAndSubstring) {
    MockBackend mock;
    mock.add({"merger", "", std::string("R"), "", 1, 0});
    mock.add({"judge", "special", std::string("J"), "", 0, 0});
    EXPECT_EQ(mock.send(req("merger")).text, "R");
    EXPECT_EQ(mock.send(req("judge", "a special case")).text, "J");
    EXPECT_EQ(mock.send(req("judge", "special again")).text, "J");
    EXPECT_THROW(mock.send(req("judge", "plain")), UnscriptedRequest);
}

TEST(MockBackend, ExhaustedEntryIsNotReusedUnlessRepeatable) {
    MockBackend mock({{"merger", "", std::string("R"), "", 1, 0}});
    mock.send(req("merger"));
    EXPECT_THROW(mock.send(req("merger")), UnscriptedRequest);

    MockBackend rep({{"merger", "", std::string("R"), "", 0, 0}});
    EXPECT_EQ(rep.send(req("merger")).text, "R");
    EXPECT_EQ(rep.send(req("merger")).text, "R");
}

TEST(MockBackend, UnscriptedTagIsError) {
    MockBackend mock({{"merger", "", std::string("R"), "", 0, 0}});
    EXPECT_THROW(mock.send(req("proposer")), UnscriptedRequest);
}

TEST(MockBackend, LoadsScriptFile) {
    testing_support::TempDir dir("mock");
    testing_support::write_text(dir / "r.txt", "from file");
    testing_support::write_text(dir / "s.json", R"({"model":"m1","entries":[
        {"tag":"a","response_file":"r.txt"},
        {"tag":"b","error":"auth"}]})");
    auto mock = MockBackend::from_file(dir / "s.json");
    EXPECT_EQ(mock->model_id(), "m1");
    EXPECT_EQ(mock->send(req("a")).text, "from file");
    EXPECT_THROW(mock->send(req("b")), AuthError);
    EXPECT_THROW(MockBackend::from_json_text("{\"entries\":[]}"), ConfigError);
}

TEST(LlmClient, RetriesRateLimitsThenSucceeds) {
    MockBackend mock;
    mock.add({"gen", "", std::nullopt, "rate_limit", 2, 0});
    mock.add({"gen", "", std::string("done"), "", 1, 0});
    AuditLog audit;
    std::vector<std::chrono::milliseconds> sleeps;
    RetryPolicy policy;
    policy.backoff_base = 100ms;
    LlmClient client(mock, &audit, policy, no_sleep(&sleeps));
    auto c = client.complete(req("gen"), {"generator", 7, 3});
    EXPECT_EQ(c.response.text, "done");
    EXPECT_EQ(c.attempts, 3);
    client.close(c, "accepted", 4);
    auto recs = audit.records();
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_EQ(recs[0].attempts, 3);
    EXPECT_EQ(recs[0].outcome, "ok");
    EXPECT_EQ(recs[0].version_before, 3u);
    EXPECT_EQ(recs[0].version_after, 4u);
    EXPECT_EQ(sleeps, (std::vector<std::chrono::milliseconds>{100ms, 200ms}));
}

TEST(LlmClient, AuthErrorIsNotRetried) {
    MockBackend mock({{"", "", std::nullopt, "auth", 0, 0}});
    AuditLog audit;
    LlmClient client(mock, &audit, {}, no_sleep());
    EXPECT_THROW(client.complete(req("x"), {}), AuthError);
    EXPECT_EQ(mock.calls(), 1u);
    ASSERT_EQ(audit.records().size(), 1u);
    EXPECT_EQ(audit.records()[0].outcome, "auth_error");
}

TEST(LlmClient, RetriesExhaustedAfterMaxRetries) {
    MockBackend mock({{"", "", std::nullopt, "timeout", 0, 0}});
    AuditLog audit;
    LlmClient client(mock, &audit, {}, no_sleep());
    try {
        client.complete(req("x"), {});
        FAIL();
    } catch (const RetriesExhausted& e) {
        EXPECT_EQ(e.attempts(), 4);
    }
    EXPECT_EQ(mock.calls(), 4u);
    EXPECT_EQ(audit.records().at(0).outcome, "retries_exhausted");
}

TEST(LlmClient, EveryCallProducesOneRecord) {
    MockBackend mock;
    mock.add_responder([](const ChatRequest& r) -> std::optional<std::string> {
        if (r.user_prompt == "fail") return std::nullopt;
        return "fine";
    });
    AuditLog audit;
    LlmClient client(mock, &audit, {}, no_sleep());
    for (int i = 0; i < 5; ++i) {
        auto c = client.complete(req("t"), {});
        client.close(c, "accepted", 0);
    }
    EXPECT_THROW(client.complete(req("t", "fail"), {}), UnscriptedRequest);
    EXPECT_EQ(audit.records().size(), 6u);
}

TEST(LlmClient, RejectsBadRequests) {
    MockBackend mock({{"", "", std::string("ok"), "", 0, 0}});
    LlmClient client(mock, nullptr, {}, no_sleep());
    auto r = req("t");
    r.temperature = 3.0;
    EXPECT_THROW(client.complete(r, {}), ConfigError);
    r = req("t");
    r.system_prompt.clear();
    r.user_prompt.clear();
    EXPECT_THROW(client.complete(r, {}), ConfigError);
}

TEST(RetryPolicy, ExponentialWithCap) {
    RetryPolicy p;
    p.backoff_base = 1000ms;
    p.backoff_cap = 5000ms;
    EXPECT_EQ(p.delay(1), 1000ms);
    EXPECT_EQ(p.delay(2), 2000ms);
    EXPECT_EQ(p.delay(3), 4000ms);
    EXPECT_EQ(p.delay(4), 5000ms);
}

TEST(HttpBackend, WireFormat) {
    ChatRequest r = req("t", "question");
    r.temperature = 0.7;
    r.max_output_tokens = 55;
    auto body = nlohmann::json::parse(HttpBackend::build_body(r, "gpt-x"));
    EXPECT_EQ(body["model"], "gpt-x");
    EXPECT_EQ(body["messages"][0]["role"], "system");
    EXPECT_EQ(body["messages"][1]["content"], "question");
    EXPECT_DOUBLE_EQ(body["temperature"].get<double>(), 0.7);
    EXPECT_EQ(body["max_tokens"], 55);
    auto resp = HttpBackend::parse_body(
        R"({"choices":[{"message":{"role":"assistant","content":"hi"}}],"usage":{"prompt_tokens":3,"completion_tokens":1}})");
    EXPECT_EQ(resp.text, "hi");
    EXPECT_EQ(resp.usage.input, 3);
    EXPECT_THROW(HttpBackend::parse_body(R"({"choices":[]})"), TransportError);
}

class LocalServer : public ::testing::Test {
  protected:
    void SetUp() override {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& rq, httplib::Response& rs) {
            auth_seen_ = rq.get_header_value("Authorization");
            if (++hits_ <= fail_first_) {
                rs.status = fail_status_;
                return;
            }
            rs.set_content(R"({"choices":[{"message":{"content":"served"}}]})", "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        ::setenv("INTENTKIT_TEST_KEY", "sk-test-secret", 1);
        network::deny(false);
    }
    void TearDown() override {
        server_.stop();
        thread_.join();
    }

    BackendConfig config() {
        BackendConfig c;
        c.endpoint = "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
        c.model = "local";
        c.credential_env = "INTENTKIT_TEST_KEY";
        c.timeout = 5000ms;
        return c;
    }

    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<int> hits_{0};
    int fail_first_ = 0;
    int fail_status_ = 429;
    std::string auth_seen_;
};

TEST_F(LocalServer, RetriesOverHttpAndSendsBearerCredential) {
    fail_first_ = 2;
    HttpBackend backend(config());
    AuditLog audit;
    LlmClient client(backend, &audit, {}, no_sleep());
    auto before = network::attempts();
    auto c = client.complete(req("t"), {});
    EXPECT_EQ(c.response.text, "served");
    EXPECT_EQ(c.attempts, 3);
    EXPECT_EQ(network::attempts() - before, 3u);
    EXPECT_EQ(auth_seen_, "Bearer sk-test-secret");
    client.close(c, "accepted", 0);
    for (const auto& r : audit.records()) EXPECT_EQ(audit_record_to_json(r).find("sk-test"), std::string::npos);
}

TEST_F(LocalServer, UnauthorizedIsAuthError) {
    fail_first_ = 100;
    fail_status_ = 401;
    HttpBackend backend(config());
    LlmClient client(backend, nullptr, {}, no_sleep());
    EXPECT_THROW(client.complete(req("t"), {}), AuthError);
    EXPECT_EQ(hits_.load(), 1);
}

TEST_F(LocalServer, DeniedNetworkNeverConnects) {
    network::deny(true);
    HttpBackend backend(config());
    EXPECT_THROW(backend.send(req("t")), NetworkDenied);
    EXPECT_EQ(hits_.load(), 0);
    network::deny(false);
}

TEST_F(LocalServer, MissingCredentialIsAuthError) {
    auto c = config();
    c.credential_env = "INTENTKIT_TEST_UNSET_VARIABLE";
    HttpBackend backend(c);
    EXPECT_THROW(backend.send(req("t")), AuthError);
}
