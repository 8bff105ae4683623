// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <fstream>
#include <thread>

#include "great/error.hpp"
#include "great/mllm.hpp"
#include "testing_util.hpp"

// after Eigen: glibc resolver headers pulled in by httplib define a _res macro
#include <httplib.h>
#include <json.hpp>

using namespace great;
using namespace great::mllm;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

InteractionImage tiny_image(const std::string& id) {
    InteractionImage img;
    img.id = id;
    img.object_category = "mug";
    img.affordance_category = "grasp";
    img.height = img.width = 32;
    for (auto& ch : img.pixels) ch.assign(32 * 32, 0.5);
    return img;
}

std::vector<std::string> four_prompts() { return {"p1", "p2", "p3", "p4"}; }

// in-process chat-completions stub
class StubServer {
public:
    explicit StubServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server_.Post("/v1/chat/completions", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

std::string chat_reply(const std::string& text) {
    return json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}}.dump();
}

}  // namespace

TEST_CASE("fixture backend returns the canned answers in order") {
    const fs::path dir = testing::temp_dir("fixture");
    {
        std::ofstream f(dir / "fix.json");
        f << json{{"img_7", {"a one", "a two", "a three", "a four"}}}.dump();
    }
    BackendConfig cfg;
    cfg.kind = BackendConfig::Kind::fixture;
    cfg.fixture_path = (dir / "fix.json").string();
    const auto answers = converse(tiny_image("img_7"), four_prompts(), cfg);
    CHECK(answers == std::vector<std::string>{"a one", "a two", "a three", "a four"});

    // pure function of (image id, prompt index)
    CHECK(converse(tiny_image("img_7"), four_prompts(), cfg) == answers);

    CHECK_THROWS_WITH_AS(static_cast<void>(converse(tiny_image("img_8"), four_prompts(), cfg)),
                         doctest::Contains("img_8"), Error);
}

TEST_CASE("converse rejects a wrong prompt count") {
    BackendConfig cfg;
    cfg.kind = BackendConfig::Kind::fixture;
    cfg.fixture_path = "unused.json";
    CHECK_THROWS_AS(static_cast<void>(converse(tiny_image("x"), {"only one"}, cfg)), Error);
}

TEST_CASE("http backend holds a sequential four-turn conversation") {
    std::atomic<int> calls{0};
    StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body);
        const auto& messages = body.at("messages");
        // history grows by two per turn: user, assistant, ..., user
        const int turn = static_cast<int>((messages.size() + 1) / 2);
        // image attached only on the first user message
        const auto& first = messages.at(0).at("content");
        bool has_image = false;
        for (const auto& item : first) has_image |= item.at("type") == "image";
        CHECK(has_image);
        if (messages.size() > 1) {
            for (const auto& item : messages.at(2).at("content")) CHECK(item.at("type") == "text");
        }
        ++calls;
        res.set_content(chat_reply("A" + std::to_string(turn)), "application/json");
    });

    BackendConfig cfg;
    cfg.kind = BackendConfig::Kind::http;
    cfg.base_url = stub.url();
    cfg.max_retries = 0;
    const auto answers = converse(tiny_image("img_http"), four_prompts(), cfg);
    CHECK(answers == std::vector<std::string>{"A1", "A2", "A3", "A4"});
    CHECK(calls == 4);
}

TEST_CASE("http backend retries 5xx with backoff then succeeds") {
    std::atomic<int> calls{0};
    StubServer stub([&](const httplib::Request&, httplib::Response& res) {
        const int n = ++calls;
        if (n <= 2) {
            res.status = 500;
            res.set_content("overloaded", "text/plain");
        } else {
            res.set_content(chat_reply("ok"), "application/json");
        }
    });
    BackendConfig cfg;
    cfg.kind = BackendConfig::Kind::http;
    cfg.base_url = stub.url();
    cfg.max_retries = 3;
    cfg.retry_backoff_s = 0.01;
    const auto answers = converse(tiny_image("img_retry"), four_prompts(), cfg);
    CHECK(answers.size() == 4);
    // 2 failures + 1 success on turn one, then one call per remaining turn
    CHECK(calls == 6);
}

TEST_CASE("http backend surfaces status after exhausting retries") {
    std::atomic<int> calls{0};
    StubServer stub([&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 503;
    });
    BackendConfig cfg;
    cfg.kind = BackendConfig::Kind::http;
    cfg.base_url = stub.url();
    cfg.max_retries = 2;
    cfg.retry_backoff_s = 0.005;
    CHECK_THROWS_WITH_AS(static_cast<void>(converse(tiny_image("x"), four_prompts(), cfg)),
                         doctest::Contains("503"), Error);
    CHECK(calls == 3);
}

TEST_CASE("empty answers are protocol errors") {
    StubServer stub([&](const httplib::Request&, httplib::Response& res) {
        res.set_content(chat_reply(""), "application/json");
    });
    BackendConfig cfg;
    cfg.kind = BackendConfig::Kind::http;
    cfg.base_url = stub.url();
    cfg.max_retries = 0;
    try {
        static_cast<void>(converse(tiny_image("x"), four_prompts(), cfg));
        FAIL("expected protocol error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::protocol);
    }
}

TEST_CASE("cache round trip, absence and corruption") {
    const fs::path dir = testing::temp_dir("cache");
    CHECK(!cache_get("nothing", dir).has_value());

    ReasoningTranscript t;
    t.image_id = "img_9";
    t.object_category = "mug";
    for (int i = 0; i < 4; ++i) {
        t.turns.push_back({"prompt " + std::to_string(i), "answer é中 " + std::to_string(i)});
    }
    cache_put(t, dir);
    const auto back = cache_get("img_9", dir);
    REQUIRE(back.has_value());
    CHECK(back->image_id == t.image_id);
    CHECK(back->object_category == t.object_category);
    CHECK(back->turns == t.turns);

    // corrupt file: quarantined, treated as absent
    std::ofstream(dir / "bad.json", std::ios::trunc) << "{ not json";
    CHECK(!cache_get("bad", dir).has_value());
    CHECK(!fs::exists(dir / "bad.json"));
    CHECK(fs::exists(dir / "bad.json.corrupt"));

    // partial transcripts are rejected at put time
    ReasoningTranscript partial = t;
    partial.turns.pop_back();
    CHECK_THROWS_AS(cache_put(partial, dir), Error);
}

TEST_CASE("concurrent cache puts of the same id leave one intact winner") {
    const fs::path dir = testing::temp_dir("cache_race");
    auto transcript = [](int writer) {
        ReasoningTranscript t;
        t.image_id = "contested";
        t.object_category = "mug";
        for (int i = 0; i < 4; ++i) {
            t.turns.push_back({"p" + std::to_string(i),
                               "writer " + std::to_string(writer) + " body " + std::string(2000, 'x')});
        }
        return t;
    };
    std::vector<std::thread> writers;
    for (int w = 0; w < 8; ++w) {
        writers.emplace_back([&, w] {
            for (int round = 0; round < 25; ++round) cache_put(transcript(w), dir);
        });
    }
    for (auto& th : writers) th.join();
    const auto winner = cache_get("contested", dir);
    REQUIRE(winner.has_value());
    CHECK(winner->turns.size() == 4);
    CHECK(winner->turns[0].second.size() > 2000);  // never truncated
}
