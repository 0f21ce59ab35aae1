// SPDX-License-Identifier: Apache-2.0
#include "proceed/error.hpp"
#include "proceed/llm_agents.hpp"
#include "proceed/llm_client.hpp"

#include "../support/fixtures.hpp"

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <deque>
#include <thread>

using namespace proceed;

namespace
{

std::string completion(std::string_view text, int prompt = 11, int completion_tokens = 5)
{
    nlohmann::json j{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}},
                     {"usage", {{"prompt_tokens", prompt}, {"completion_tokens", completion_tokens}}}};
    return j.dump();
}

/// Replays scripted responses and records request bodies.
class ScriptedTransport final : public Transport
{
public:
    explicit ScriptedTransport(std::deque<HttpResponse> script): _script(std::move(script)) {}

    HttpResponse post(const std::string& body, const std::map<std::string, std::string>& /*headers*/) override
    {
        std::lock_guard lock(_mutex);
        bodies.push_back(body);
        if (_script.empty())
            throw Error(Errc::Timeout, "script exhausted");
        auto r = _script.front();
        _script.pop_front();
        return r;
    }

    std::vector<std::string> bodies;

private:
    std::mutex _mutex;
    std::deque<HttpResponse> _script;
};

ClientConfig config(std::string url = "http://127.0.0.1:1/v1/chat/completions")
{
    ClientConfig c;
    c.endpoint_url = std::move(url);
    c.model_name = "mock";
    c.api_key = "test-key";
    c.max_retries = 2;
    c.initial_backoff = std::chrono::milliseconds(1);
    return c;
}

std::shared_ptr<LlmClient> scripted(std::deque<HttpResponse> script, ScriptedTransport** out = nullptr)
{
    auto t = std::make_unique<ScriptedTransport>(std::move(script));
    if (out)
        *out = t.get();
    return std::make_shared<LlmClient>(config(), std::move(t), [](std::chrono::milliseconds) {});
}

ChatExchange hello()
{
    ChatExchange ex;
    ex.messages = {{"user", "hello"}};
    return ex;
}

/// Local chat-completion server answering from a handler.
struct MockServer
{
    httplib::Server server;
    int port = 0;
    std::thread thread;

    explicit MockServer(std::function<void(const httplib::Request&, httplib::Response&)> handler)
    {
        server.Post("/v1/chat/completions", std::move(handler));
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~MockServer()
    {
        server.stop();
        thread.join();
    }
    [[nodiscard]] std::string url() const
    {
        return "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    }
};

} // namespace

TEST_CASE("client config validation")
{
    auto c = config();
    c.model_name.clear();
    CHECK_THROWS_AS(validate(c), Error);
    c = config();
    c.max_in_flight = 0;
    CHECK_THROWS_AS(validate(c), Error);
    CHECK_THROWS_AS(HttpTransport("no-scheme", std::chrono::milliseconds(10)), Error);
}

TEST_CASE("request body and completion parsing")
{
    auto const client = scripted({});
    auto ex = hello();
    ex.sampling.temperature = 0.25;
    auto const body = nlohmann::json::parse(client->request_body(ex));
    CHECK(body["model"] == "mock");
    CHECK(body["messages"][0]["content"] == "hello");
    CHECK(body["temperature"] == 0.25);

    read_completion(completion("echo", 3, 4), ex);
    CHECK(ex.response_text == "echo");
    CHECK(ex.usage.prompt_units == 3);
    CHECK(ex.usage.completion_units == 4);
    CHECK_THROWS_AS(read_completion("{\"choices\": []}", ex), Error);
}

TEST_CASE("mock server round trip with retry after 429")
{
    std::atomic<int> calls{0};
    std::string auth;
    MockServer server([&](const httplib::Request& req, httplib::Response& res) {
        auth = req.get_header_value("Authorization");
        if (calls++ == 0)
        {
            res.status = 429;
            return;
        }
        res.set_content(completion("fixed text", 7, 2), "application/json");
    });
    std::vector<std::chrono::milliseconds> sleeps;
    auto c = config(server.url());
    c.timeout = std::chrono::milliseconds(5000);
    LlmClient client(c, nullptr, [&](std::chrono::milliseconds d) { sleeps.push_back(d); });
    auto ex = hello();
    client.complete(ex);
    CHECK(ex.response_text == "fixed text");
    CHECK(ex.usage.prompt_units == 7);
    CHECK(ex.usage.completion_units == 2);
    CHECK(calls == 2);
    CHECK(sleeps.size() == 1);
    CHECK(auth == "Bearer test-key");
}

TEST_CASE("retry policy")
{
    SUBCASE("5xx and timeouts are retried until exhausted")
    {
        ScriptedTransport* t = nullptr;
        auto const client = scripted({{500, "boom"}, {503, "busy"}}, &t);
        auto ex = hello();
        try
        {
            client->complete(ex);
            FAIL("expected ExhaustedRetries");
        }
        catch (const Error& e)
        {
            CHECK(e.code() == Errc::ExhaustedRetries);
        }
        CHECK(t->bodies.size() == 3);
    }
    SUBCASE("other 4xx fail immediately")
    {
        ScriptedTransport* t = nullptr;
        auto const client = scripted({{400, "bad"}, {200, completion("late")}}, &t);
        auto ex = hello();
        try
        {
            client->complete(ex);
            FAIL("expected HttpError");
        }
        catch (const HttpStatusError& e)
        {
            CHECK(e.code() == Errc::HttpError);
            CHECK(e.status() == 400);
        }
        CHECK(t->bodies.size() == 1);
    }
    SUBCASE("backoff grows geometrically")
    {
        std::vector<std::chrono::milliseconds> sleeps;
        auto c = config();
        c.max_retries = 3;
        c.initial_backoff = std::chrono::milliseconds(100);
        c.max_backoff = std::chrono::milliseconds(250);
        LlmClient client(c, std::make_unique<ScriptedTransport>(std::deque<HttpResponse>{}),
                         [&](std::chrono::milliseconds d) { sleeps.push_back(d); });
        auto ex = hello();
        CHECK_THROWS_AS(client.complete(ex), Error);
        REQUIRE(sleeps.size() == 3);
        CHECK(sleeps[0].count() == 100);
        CHECK(sleeps[1].count() == 200);
        CHECK(sleeps[2].count() == 250);
    }
}

TEST_CASE("in-flight limit")
{
    std::atomic<int> active{0};
    std::atomic<int> peak{0};
    MockServer server([&](const httplib::Request&, httplib::Response& res) {
        int const now = ++active;
        int prev = peak.load();
        while (now > prev && !peak.compare_exchange_weak(prev, now))
        {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(30));
        --active;
        res.set_content(completion("ok"), "application/json");
    });
    auto c = config(server.url());
    c.max_in_flight = 2;
    c.timeout = std::chrono::milliseconds(5000);
    LlmClient client(c);
    std::vector<std::jthread> threads;
    for (int i = 0; i < 8; ++i)
        threads.emplace_back([&] {
            auto ex = hello();
            client.complete(ex);
        });
    threads.clear();
    CHECK(peak.load() <= 2);
    CHECK(peak.load() >= 1);
}

TEST_CASE("candidate matching and history rendering")
{
    std::vector<std::string> cands{"go to room 1", "Take Key"};
    CHECK(match_candidate(cands, "go to room 1") == 0);
    CHECK(match_candidate(cands, "  take   key ") == 1);
    CHECK(match_candidate(cands, "fly") == 2);

    Trajectory t;
    CHECK(render_history(t) == "(none)");
    StepRecord s;
    s.state_text = "start";
    s.action = "take key";
    s.observation = "You take the key.";
    t.steps.push_back(s);
    CHECK(render_history(t) == "Observation: start\nAction: take key\nObservation: You take the key.\n");
}

TEST_CASE("llm policy, critic and refiner over a scripted backend")
{
    auto env = testing::six_room_env();
    env->reset(0);
    CounterRng rng(1);

    LlmPolicy policy(scripted({{200, completion("<think>key first</think><action>take key</action>", 1, 9)}}));
    auto const d = policy.decide(*env, rng);
    CHECK(d.action == "take key");
    CHECK(d.units == 9);
    CHECK_FALSE(policy.logprob(*env, "take key"));

    LlmPolicy stray(scripted({{200, completion("<action>dance</action>")}}));
    auto const fallback = stray.decide(*env, rng);
    auto const cands = env->candidate_actions();
    CHECK(std::find(cands.begin(), cands.end(), fallback.action) != cands.end());

    ScriptedTransport* t = nullptr;
    LlmCritic critic(scripted({{200, completion("no json here", 1, 3)},
                               {200, completion("```json {\"score\": 2, \"critique\": \"wrong room\"} ```", 1, 4)}},
                              &t),
                     false);
    auto const record = critic.evaluate({}, *env, "go to room 1", std::nullopt, rng);
    CHECK(record.score == 2);
    CHECK(record.critique == "wrong room");
    CHECK(record.units == 7);
    CHECK(t->bodies.size() == 2);
    CHECK(t->bodies[0].find("Admissible Actions:") != std::string::npos);

    LlmCritic stubborn(scripted({{200, completion("?")}, {200, completion("?")}, {200, completion("?")}}), false);
    CHECK(stubborn.evaluate({}, *env, "go to room 1", std::nullopt, rng).score == 10);

    CritiqueRecord low{.score = 1, .critique = "fetch the key", .suggestion_action = "take key"};
    LlmRefiner refiner(scripted({{200, completion("<action>go to room 1</action>")}}));
    CHECK_THROWS_AS(refiner.refine({}, *env, policy, "go to room 1", CritiqueRecord{.score = 1}, rng), Error);
    LlmRefiner guided(scripted({{200, completion("<action>go to room 1</action>")}}));
    CHECK(guided.refine({}, *env, policy, "go to room 1", low, rng).action == "take key");
}
