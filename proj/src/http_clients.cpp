#include "synthpii/http_clients.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <thread>

#include "synthpii/error.hpp"
#include "synthpii/utf8.hpp"

namespace synthpii::http {

std::string Url::origin() const { return scheme + "://" + host + ":" + std::to_string(port); }

Url parse_url(std::string_view text) {
    Url url;
    const auto sep = text.find("://");
    if (sep == std::string_view::npos)
        throw ConfigError("not an absolute URL: '" + std::string(text) + "'");
    url.scheme = utf8::to_lower(text.substr(0, sep));
    if (url.scheme != "http" && url.scheme != "https")
        throw ConfigError("unsupported URL scheme in '" + std::string(text) + "'");
    auto rest = text.substr(sep + 3);
    const auto path_start = rest.find_first_of("/?");
    auto authority = rest.substr(0, path_start);
    url.path = path_start == std::string_view::npos ? "/" : std::string(rest.substr(path_start));
    if (!url.path.empty() && url.path.front() == '?')
        url.path.insert(url.path.begin(), '/');
    url.port = url.scheme == "https" ? 443 : 80;
    if (const auto colon = authority.rfind(':');
        colon != std::string_view::npos && authority.find(']') == std::string_view::npos) {
        try {
            url.port = std::stoi(std::string(authority.substr(colon + 1)));
        } catch (const std::exception &) {
            throw ConfigError("bad port in '" + std::string(text) + "'");
        }
        authority = authority.substr(0, colon);
    }
    url.host = std::string(authority);
    if (url.host.empty())
        throw ConfigError("URL without host: '" + std::string(text) + "'");
    return url;
}

std::string url_encode(std::string_view text) {
    static constexpr char hex[] = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : text) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out += static_cast<char>(c);
        } else {
            out += '%';
            out += hex[c >> 4];
            out += hex[c & 0xF];
        }
    }
    return out;
}

std::chrono::milliseconds RetryPolicy::delay_before(int attempt) const {
    const double factor = std::pow(multiplier, std::max(0, attempt - 2));
    const auto ms = static_cast<long long>(static_cast<double>(initial_delay.count()) * factor);
    return std::min(std::chrono::milliseconds(ms), max_delay);
}

bool RetryPolicy::retryable(int status) noexcept {
    return status == 0 || status == 408 || status == 429 || status >= 500;
}

Sleeper real_sleeper() {
    return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

RateLimiter::RateLimiter(std::chrono::milliseconds min_interval, Sleeper sleep)
    : min_interval_(min_interval), sleep_(std::move(sleep)) {}

void RateLimiter::acquire(const std::string &key) {
    if (min_interval_.count() <= 0)
        return;
    std::chrono::steady_clock::time_point slot;
    {
        std::lock_guard lock(mutex_);
        const auto now = std::chrono::steady_clock::now();
        auto &next = next_slot_[key];
        slot = std::max(now, next);
        next = slot + min_interval_;
    }
    const auto wait = slot - std::chrono::steady_clock::now();
    if (wait.count() > 0)
        sleep_(std::chrono::duration_cast<std::chrono::milliseconds>(wait));
}

HttpResponse send_with_retry(const Url &url, std::string_view method, const std::string &body,
                             const HttpOptions &options, RateLimiter &limiter,
                             const std::string &limiter_key) {
    httplib::Client client(url.origin());
    client.set_connection_timeout(options.timeout);
    client.set_read_timeout(options.timeout);
    client.set_write_timeout(options.timeout);
    client.set_follow_location(true);
    httplib::Headers headers;
    if (!options.api_key.empty())
        headers.emplace("Authorization", "Bearer " + options.api_key);

    std::string last_error;
    int last_status = 0;
    const int attempts = std::max(1, options.retry.max_attempts);
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        if (attempt > 1)
            options.sleep(options.retry.delay_before(attempt));
        limiter.acquire(limiter_key);
        httplib::Result res = method == "POST"
                                  ? client.Post(url.path, headers, body, "application/json")
                                  : client.Get(url.path, headers);
        if (!res) {
            last_status = 0;
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 200 && res->status < 300)
            return {res->status, res->body};
        last_status = res->status;
        last_error = "HTTP " + std::to_string(res->status);
        if (!RetryPolicy::retryable(res->status))
            break;
    }
    throw TransportError(std::string(method) + " " + url.origin() + url.path + " failed: " +
                             last_error,
                         last_status);
}

// ---------------------------------------------------------------------------

namespace {

io::Json parse_body(std::string_view body, std::string_view what) {
    try {
        return io::Json::parse(body);
    } catch (const io::Json::parse_error &e) {
        throw TransportError(std::string(what) + ": malformed JSON response: " + e.what());
    }
}

std::string with_query(const Url &url, const std::string &query) {
    return url.path + (url.path.find('?') == std::string::npos ? "?" : "&") + query;
}

} // namespace

HttpChatClient::HttpChatClient(std::string endpoint, HttpOptions options)
    : url_(parse_url(endpoint)), options_(std::move(options)),
      limiter_(options_.min_interval, options_.sleep),
      slots_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(options_.parallelism, 1, 64))) {}

std::string HttpChatClient::request_body(const generation::ChatRequest &request) {
    std::string user;
    for (const auto &m : request.user_messages) {
        if (!user.empty())
            user += "\n\n";
        user += m;
    }
    io::Json messages = io::Json::array();
    if (!request.system.empty())
        messages.push_back({{"role", "system"}, {"content", request.system}});
    messages.push_back({{"role", "user"}, {"content", user}});
    return io::Json{{"model", request.model},
                    {"messages", std::move(messages)},
                    {"temperature", request.temperature},
                    {"top_p", request.top_p},
                    {"max_tokens", request.max_tokens}}
        .dump();
}

std::string HttpChatClient::parse_reply(std::string_view body) {
    const auto doc = parse_body(body, "chat completion");
    try {
        return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const io::Json::exception &e) {
        throw TransportError(std::string("chat completion: unexpected response shape: ") +
                             e.what());
    }
}

std::string HttpChatClient::complete(const generation::ChatRequest &request) {
    slots_.acquire();
    struct Release {
        std::counting_semaphore<64> &s;
        ~Release() { s.release(); }
    } release{slots_};
    const auto res = send_with_retry(url_, "POST", request_body(request), options_, limiter_);
    return parse_reply(res.body);
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string endpoint, std::size_t dimension,
                                             HttpOptions options)
    : url_(parse_url(endpoint)), dimension_(dimension), options_(std::move(options)),
      limiter_(options_.min_interval, options_.sleep) {}

std::vector<textmetrics::Vector> HttpEmbeddingProvider::call(std::string_view text, bool pooled) {
    io::Json req{{"texts", io::Json::array({std::string(text)})}};
    if (pooled)
        req["pooled"] = true;
    const auto res = send_with_retry(url_, "POST", req.dump(), options_, limiter_);
    const auto doc = parse_body(res.body, "embedding");
    std::vector<textmetrics::Vector> out;
    try {
        for (const auto &v : doc.at("vectors")) {
            // Token mode may nest one list of vectors per input text.
            if (!v.empty() && v.at(0).is_array()) {
                for (const auto &inner : v)
                    out.push_back(inner.get<textmetrics::Vector>());
            } else {
                out.push_back(v.get<textmetrics::Vector>());
            }
        }
    } catch (const io::Json::exception &e) {
        throw TransportError(std::string("embedding: unexpected response shape: ") + e.what());
    }
    for (const auto &v : out) {
        if (v.size() != dimension_)
            throw DataError("embedding endpoint returned dimension " + std::to_string(v.size()) +
                            ", expected " + std::to_string(dimension_));
        if (!std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); }))
            throw DataError("embedding endpoint returned a non-finite value");
    }
    return out;
}

std::vector<textmetrics::Vector> HttpEmbeddingProvider::token_vectors(std::string_view text) {
    return call(text, false);
}

textmetrics::Vector HttpEmbeddingProvider::pooled_vector(std::string_view text) {
    auto vs = call(text, true);
    if (vs.size() != 1)
        throw DataError("embedding endpoint returned " + std::to_string(vs.size()) +
                        " pooled vectors for one text");
    return std::move(vs.front());
}

HttpSearchClient::HttpSearchClient(std::string endpoint, HttpOptions options)
    : url_(parse_url(endpoint)), options_(std::move(options)),
      limiter_(options_.min_interval, options_.sleep) {}

std::vector<privacy::SearchResult> HttpSearchClient::search(std::string_view query, std::size_t k) {
    Url url = url_;
    url.path = with_query(url_, "q=" + url_encode(query) + "&k=" + std::to_string(k));
    const auto res = send_with_retry(url, "GET", {}, options_, limiter_, url_.host);
    std::vector<privacy::SearchResult> out;
    try {
        out = privacy::results_from_json(parse_body(res.body, "search"));
    } catch (const std::exception &e) {
        throw TransportError(std::string("search: unexpected response shape: ") + e.what());
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const auto &a, const auto &b) { return a.rank < b.rank; });
    if (out.size() > k)
        out.resize(k);
    return out;
}

HttpPageFetcher::HttpPageFetcher(HttpOptions options)
    : options_(std::move(options)), limiter_(options_.min_interval, options_.sleep) {}

std::string HttpPageFetcher::fetch(std::string_view url_text) {
    Url url;
    try {
        url = parse_url(url_text);
    } catch (const ConfigError &e) {
        throw TransportError(e.what());
    }
    const auto res = send_with_retry(url, "GET", {}, options_, limiter_, url.host);
    return html_to_text(res.body);
}

// ---------------------------------------------------------------------------

namespace {

bool starts_with_ci(std::string_view s, std::size_t pos, std::string_view prefix) {
    if (s.size() - pos < prefix.size())
        return false;
    for (std::size_t i = 0; i < prefix.size(); ++i)
        if (std::tolower(static_cast<unsigned char>(s[pos + i])) != prefix[i])
            return false;
    return true;
}

std::size_t find_ci(std::string_view s, std::size_t from, std::string_view needle) {
    for (std::size_t i = from; i + needle.size() <= s.size(); ++i)
        if (starts_with_ci(s, i, needle))
            return i;
    return std::string_view::npos;
}

void decode_entity(std::string_view entity, std::string &out) {
    static const std::map<std::string_view, char32_t> named{
        {"amp", U'&'}, {"lt", U'<'}, {"gt", U'>'}, {"quot", U'"'}, {"apos", U'\''}, {"nbsp", U' '},
        {"#39", U'\''}};
    if (const auto it = named.find(entity); it != named.end()) {
        utf8::append(out, it->second);
        return;
    }
    if (entity.size() > 1 && entity[0] == '#') {
        try {
            const bool hex = entity[1] == 'x' || entity[1] == 'X';
            const auto digits = std::string(entity.substr(hex ? 2 : 1));
            const auto cp = static_cast<char32_t>(std::stoul(digits, nullptr, hex ? 16 : 10));
            if (cp > 0 && cp <= 0x10FFFF && !(cp >= 0xD800 && cp <= 0xDFFF)) {
                utf8::append(out, cp);
                return;
            }
        } catch (const std::exception &) {
        }
    }
    out += '&';
    out += entity;
    out += ';';
}

} // namespace

std::string html_to_text(std::string_view html) {
    std::string raw;
    std::size_t i = 0;
    while (i < html.size()) {
        const char c = html[i];
        if (c == '<') {
            if (html.substr(i, 4) == "<!--") {
                const auto end = html.find("-->", i + 4);
                i = end == std::string_view::npos ? html.size() : end + 3;
                raw += ' ';
                continue;
            }
            for (std::string_view tag : {"script", "style"}) {
                if (starts_with_ci(html, i + 1, tag)) {
                    const auto close = find_ci(html, i, std::string("</") + std::string(tag));
                    if (close != std::string_view::npos) {
                        const auto gt = html.find('>', close);
                        i = gt == std::string_view::npos ? html.size() : gt;
                    }
                    break;
                }
            }
            const auto gt = html.find('>', i);
            i = gt == std::string_view::npos ? html.size() : gt + 1;
            raw += ' ';
            continue;
        }
        if (c == '&') {
            const auto semi = html.find(';', i);
            if (semi != std::string_view::npos && semi - i <= 10) {
                decode_entity(html.substr(i + 1, semi - i - 1), raw);
                i = semi + 1;
                continue;
            }
        }
        raw += c;
        ++i;
    }
    const auto words = utf8::split_whitespace(utf8::sanitize(raw));
    std::string out;
    for (const auto &w : words) {
        if (!out.empty())
            out += ' ';
        out += w;
    }
    return out;
}

} // namespace synthpii::http
