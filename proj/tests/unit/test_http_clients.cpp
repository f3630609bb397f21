#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "synthpii/error.hpp"
#include "synthpii/http_clients.hpp"

using namespace synthpii;
using namespace synthpii::http;
using namespace std::chrono_literals;

namespace {

/// Local server on an ephemeral port, stopped on destruction.
class LocalServer {
  public:
    LocalServer() = default;
    ~LocalServer() {
        server.stop();
        if (thread_.joinable())
            thread_.join();
    }

    void start() {
        port_ = server.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }

    std::string url(const std::string &path) const {
        return "http://127.0.0.1:" + std::to_string(port_) + path;
    }

    httplib::Server server;

  private:
    int port_ = 0;
    std::thread thread_;
};

struct SleepLog {
    std::mutex mutex;
    std::vector<std::chrono::milliseconds> sleeps;

    Sleeper sleeper() {
        return [this](std::chrono::milliseconds d) {
            std::lock_guard lock(mutex);
            sleeps.push_back(d);
        };
    }
};

HttpOptions fast_options(SleepLog &log) {
    HttpOptions o;
    o.timeout = 5s;
    o.sleep = log.sleeper();
    return o;
}

} // namespace

TEST_CASE("URL parsing and encoding") {
    const auto u = parse_url("https://api.example.com:8443/v1/chat?x=1");
    CHECK(u.scheme == "https");
    CHECK(u.host == "api.example.com");
    CHECK(u.port == 8443);
    CHECK(u.path == "/v1/chat?x=1");
    CHECK(u.origin() == "https://api.example.com:8443");
    CHECK(parse_url("http://h").path == "/");
    CHECK(parse_url("http://h").port == 80);
    CHECK(parse_url("HTTP://h?q=1").path == "/?q=1");
    CHECK_THROWS_AS(parse_url("ftp://h/"), ConfigError);
    CHECK_THROWS_AS(parse_url("no-scheme"), ConfigError);
    CHECK_THROWS_AS(parse_url("http://h:abc/"), ConfigError);
    CHECK_THROWS_AS(parse_url("http:///x"), ConfigError);
    CHECK(url_encode("a b&c=\xC3\xA9~") == "a%20b%26c%3D%C3%A9~");
}

TEST_CASE("retry policy") {
    RetryPolicy p;
    CHECK(p.delay_before(2) == 500ms);
    CHECK(p.delay_before(3) == 1000ms);
    CHECK(p.delay_before(4) == 2000ms);
    CHECK(p.delay_before(10) == 8000ms);
    CHECK(RetryPolicy::retryable(0));
    CHECK(RetryPolicy::retryable(429));
    CHECK(RetryPolicy::retryable(503));
    CHECK_FALSE(RetryPolicy::retryable(400));
    CHECK_FALSE(RetryPolicy::retryable(404));
}

TEST_CASE("rate limiter spaces requests per key") {
    SleepLog log;
    RateLimiter limiter(200ms, log.sleeper());
    limiter.acquire("a");
    limiter.acquire("a");
    limiter.acquire("a");
    limiter.acquire("b");
    REQUIRE(log.sleeps.size() == 2);
    CHECK(log.sleeps[0] > 150ms);
    CHECK(log.sleeps[0] <= 200ms);
    CHECK(log.sleeps[1] > 350ms);
    CHECK(log.sleeps[1] <= 400ms);

    SleepLog none;
    RateLimiter off(0ms, none.sleeper());
    off.acquire();
    off.acquire();
    CHECK(none.sleeps.empty());
}

TEST_CASE("chat client request and reply") {
    LocalServer srv;
    std::string seen_body, seen_auth;
    srv.server.Post("/v1/chat/completions", [&](const httplib::Request &req, httplib::Response &res) {
        seen_body = req.body;
        seen_auth = req.get_header_value("Authorization");
        res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"\"Changed Post\": hi"}}]})",
                        "application/json");
    });
    srv.start();

    SleepLog log;
    auto opts = fast_options(log);
    opts.api_key = "secret";
    HttpChatClient client(srv.url("/v1/chat/completions"), opts);
    generation::ChatRequest req;
    req.model = "m";
    req.system = "sys";
    req.user_messages = {"Rewrite this.", "I am 24."};
    req.temperature = 0.7;
    req.top_p = 0.9;
    req.max_tokens = 64;
    CHECK(client.complete(req) == "\"Changed Post\": hi");
    CHECK(seen_auth == "Bearer secret");
    const auto body = io::Json::parse(seen_body);
    CHECK(body["model"] == "m");
    CHECK(body["messages"].size() == 2);
    CHECK(body["messages"][0]["role"] == "system");
    CHECK(body["messages"][1]["content"] == "Rewrite this.\n\nI am 24.");
    CHECK(body["temperature"] == 0.7);
    CHECK(body["max_tokens"] == 64);
    CHECK(log.sleeps.empty());

    CHECK_THROWS_AS(HttpChatClient::parse_reply("{\"choices\":[]}"), TransportError);
    CHECK_THROWS_AS(HttpChatClient::parse_reply("not json"), TransportError);
}

TEST_CASE("retries with backoff on 5xx, then succeed") {
    LocalServer srv;
    std::atomic<int> calls{0};
    srv.server.Post("/chat", [&](const httplib::Request &, httplib::Response &res) {
        if (++calls < 3) {
            res.status = 503;
            return;
        }
        res.set_content(R"({"choices":[{"message":{"content":"ok"}}]})", "application/json");
    });
    srv.start();
    SleepLog log;
    HttpChatClient client(srv.url("/chat"), fast_options(log));
    CHECK(client.complete({}) == "ok");
    CHECK(calls.load() == 3);
    CHECK(log.sleeps == std::vector<std::chrono::milliseconds>{500ms, 1000ms});
}

TEST_CASE("client errors are not retried and exhausted retries raise") {
    LocalServer srv;
    std::atomic<int> bad_calls{0}, busy_calls{0};
    srv.server.Post("/bad", [&](const httplib::Request &, httplib::Response &res) {
        ++bad_calls;
        res.status = 400;
    });
    srv.server.Post("/busy", [&](const httplib::Request &, httplib::Response &res) {
        ++busy_calls;
        res.status = 429;
    });
    srv.start();
    SleepLog log;
    HttpChatClient bad(srv.url("/bad"), fast_options(log));
    try {
        bad.complete({});
        FAIL("expected TransportError");
    } catch (const TransportError &e) {
        CHECK(e.status() == 400);
    }
    CHECK(bad_calls.load() == 1);

    HttpChatClient busy(srv.url("/busy"), fast_options(log));
    try {
        busy.complete({});
        FAIL("expected TransportError");
    } catch (const TransportError &e) {
        CHECK(e.status() == 429);
    }
    CHECK(busy_calls.load() == 4);
}

TEST_CASE("connection failures raise TransportError with status 0") {
    int port = 0;
    {
        httplib::Server probe;
        port = probe.bind_to_any_port("127.0.0.1");
    }
    SleepLog log;
    auto opts = fast_options(log);
    opts.retry.max_attempts = 2;
    opts.timeout = 1s;
    HttpChatClient client("http://127.0.0.1:" + std::to_string(port) + "/chat", opts);
    try {
        client.complete({});
        FAIL("expected TransportError");
    } catch (const TransportError &e) {
        CHECK(e.status() == 0);
    }
    CHECK(log.sleeps.size() == 1);
}

TEST_CASE("search client") {
    LocalServer srv;
    std::string seen_q, seen_k;
    srv.server.Get("/search", [&](const httplib::Request &req, httplib::Response &res) {
        seen_q = req.get_param_value("q");
        seen_k = req.get_param_value("k");
        res.set_content(R"({"results":[{"rank":2,"url":"https://b","snippet":""},
                                        {"rank":1,"url":"https://a","snippet":"s"},
                                        {"rank":3,"url":"https://c","snippet":""}]})",
                        "application/json");
    });
    srv.server.Get("/garbage", [](const httplib::Request &, httplib::Response &res) {
        res.set_content(R"({"unexpected":true})", "application/json");
    });
    srv.start();
    SleepLog log;
    HttpSearchClient client(srv.url("/search"), fast_options(log));
    const auto results = client.search("I moved to \"Denver\" & more", 2);
    CHECK(seen_q == "I moved to \"Denver\" & more");
    CHECK(seen_k == "2");
    REQUIRE(results.size() == 2);
    CHECK(results[0].url == "https://a");
    CHECK(results[1].rank == 2);

    HttpSearchClient garbage(srv.url("/garbage"), fast_options(log));
    CHECK_THROWS_AS(garbage.search("x", 3), TransportError);
}

TEST_CASE("page fetcher extracts visible text") {
    LocalServer srv;
    srv.server.Get("/r/x/comments/1/", [](const httplib::Request &, httplib::Response &res) {
        res.set_content("<html><head><style>p{}</style><script>var a=1;</script></head>"
                        "<body><p>I moved&nbsp;to <b>Denver</b> &amp; love it.</p></body></html>",
                        "text/html");
    });
    srv.start();
    SleepLog log;
    HttpPageFetcher fetcher(fast_options(log));
    CHECK(fetcher.fetch(srv.url("/r/x/comments/1/")) == "I moved to Denver & love it.");
    CHECK_THROWS_AS(fetcher.fetch("not a url"), TransportError);
    CHECK_THROWS_AS(fetcher.fetch(srv.url("/missing")), TransportError);
}

TEST_CASE("embedding provider") {
    LocalServer srv;
    srv.server.Post("/embed", [](const httplib::Request &req, httplib::Response &res) {
        const auto body = io::Json::parse(req.body);
        if (body.value("pooled", false))
            res.set_content(R"({"vectors":[[0.6,0.8]]})", "application/json");
        else
            res.set_content(R"({"vectors":[[[1,0],[0,1]]]})", "application/json");
    });
    srv.start();
    SleepLog log;
    HttpEmbeddingProvider p(srv.url("/embed"), 2, fast_options(log));
    CHECK(p.token_vectors("a b") == std::vector<textmetrics::Vector>{{1, 0}, {0, 1}});
    CHECK(p.pooled_vector("a b") == textmetrics::Vector{0.6, 0.8});
    HttpEmbeddingProvider wrong_dim(srv.url("/embed"), 3, fast_options(log));
    CHECK_THROWS_AS(wrong_dim.pooled_vector("a"), DataError);
}

TEST_CASE("html_to_text") {
    CHECK(html_to_text("<p>a</p><p>b</p>") == "a b");
    CHECK(html_to_text("x<!-- hidden -->y") == "x y");
    CHECK(html_to_text("<SCRIPT>alert(1)</SCRIPT>shown") == "shown");
    CHECK(html_to_text("&lt;tag&gt; &quot;q&quot; &#39;s&#39; &#x263A; &#9731;") ==
          "<tag> \"q\" 's' \xE2\x98\xBA \xE2\x98\x83");
    CHECK(html_to_text("&bogus; & alone") == "&bogus; & alone");
    CHECK(html_to_text("bad \xFF byte") == "bad \xEF\xBF\xBD byte");
    CHECK(html_to_text("").empty());
}
