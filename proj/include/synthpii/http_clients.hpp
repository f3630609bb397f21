#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "synthpii/generation.hpp"
#include "synthpii/privacy_eval.hpp"
#include "synthpii/textmetrics.hpp"

namespace synthpii::http {

struct Url {
    std::string scheme;
    std::string host;
    int port = 0;
    std::string path; ///< path plus query, at least "/"

    /// scheme://host[:port]
    std::string origin() const;
};

/// Parses an absolute http(s) URL. Throws ConfigError otherwise.
Url parse_url(std::string_view url);

std::string url_encode(std::string_view text);

/// Retries on connection failures, 429 and 5xx with exponential backoff.
struct RetryPolicy {
    int max_attempts = 4;
    std::chrono::milliseconds initial_delay{500};
    double multiplier = 2.0;
    std::chrono::milliseconds max_delay{8000};

    std::chrono::milliseconds delay_before(int attempt) const; ///< attempt >= 2
    static bool retryable(int status) noexcept;                ///< status 0 = no response
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;
Sleeper real_sleeper();

/// Spaces consecutive requests sharing a key at least `min_interval` apart.
class RateLimiter {
  public:
    explicit RateLimiter(std::chrono::milliseconds min_interval, Sleeper sleep = real_sleeper());
    void acquire(const std::string &key = {});

  private:
    std::chrono::milliseconds min_interval_;
    Sleeper sleep_;
    std::mutex mutex_;
    std::map<std::string, std::chrono::steady_clock::time_point> next_slot_;
};

struct HttpOptions {
    std::string api_key;
    std::chrono::seconds timeout{120};
    RetryPolicy retry;
    std::chrono::milliseconds min_interval{0};
    std::size_t parallelism = 4;
    Sleeper sleep = real_sleeper();
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Issues one request with rate limiting and retries. Throws TransportError
/// once retries are exhausted or on a non-retryable error status.
HttpResponse send_with_retry(const Url &url, std::string_view method, const std::string &body,
                             const HttpOptions &options, RateLimiter &limiter,
                             const std::string &limiter_key = {});

/// OpenAI-style chat-completion endpoint: POST {model, messages, temperature,
/// top_p, max_tokens}, reply text at choices[0].message.content. The user
/// messages of a request are joined by blank lines into one user turn.
class HttpChatClient final : public generation::ChatClient {
  public:
    HttpChatClient(std::string endpoint, HttpOptions options = {});

    std::string complete(const generation::ChatRequest &request) override;
    std::size_t max_parallelism() const override { return options_.parallelism; }

    static std::string request_body(const generation::ChatRequest &request);
    static std::string parse_reply(std::string_view body);

  private:
    Url url_;
    HttpOptions options_;
    RateLimiter limiter_;
    std::counting_semaphore<64> slots_;
};

/// POST {texts: [...]} -> {vectors: [[...], ...]} for token vectors;
/// POST {texts: [...], pooled: true} -> {vectors: [[...]]} for pooled vectors.
class HttpEmbeddingProvider final : public textmetrics::EmbeddingProvider {
  public:
    HttpEmbeddingProvider(std::string endpoint, std::size_t dimension, HttpOptions options = {});

    std::size_t dimension() const override { return dimension_; }
    std::vector<textmetrics::Vector> token_vectors(std::string_view text) override;
    textmetrics::Vector pooled_vector(std::string_view text) override;

  private:
    std::vector<textmetrics::Vector> call(std::string_view text, bool pooled);

    Url url_;
    std::size_t dimension_;
    HttpOptions options_;
    RateLimiter limiter_;
};

/// GET <endpoint>?q=<query>&k=<k> returning [{rank, url, snippet}] (or {results: [...]}).
class HttpSearchClient final : public privacy::SearchClient {
  public:
    HttpSearchClient(std::string endpoint, HttpOptions options = {});
    std::vector<privacy::SearchResult> search(std::string_view query, std::size_t k) override;

  private:
    Url url_;
    HttpOptions options_;
    RateLimiter limiter_;
};

/// GETs a page and strips it to visible text. Requests to the same host are
/// rate limited by `options.min_interval`.
class HttpPageFetcher final : public privacy::PageFetcher {
  public:
    explicit HttpPageFetcher(HttpOptions options = {});
    std::string fetch(std::string_view url) override;

  private:
    HttpOptions options_;
    RateLimiter limiter_;
};

/// Drops tags, comments, script and style bodies; decodes common entities;
/// collapses whitespace.
std::string html_to_text(std::string_view html);

} // namespace synthpii::http
