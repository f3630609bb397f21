#include "synthpii/privacy_eval.hpp"

#include <algorithm>
#include <unordered_map>

#include "synthpii/error.hpp"
#include "synthpii/generation.hpp"
#include "synthpii/stats.hpp"
#include "synthpii/textmetrics.hpp"
#include "synthpii/utf8.hpp"

namespace synthpii::privacy {

// ---------------------------------------------------------------------------
// Mocks

std::vector<SearchResult> results_from_json(const io::Json &doc) {
    const io::Json &list = doc.is_object() && doc.contains("results") ? doc["results"] : doc;
    if (!list.is_array())
        throw DataError("search results must be a JSON array");
    std::vector<SearchResult> out;
    for (const auto &r : list) {
        SearchResult sr;
        sr.rank = r.value("rank", out.size() + 1);
        sr.url = r.at("url").get<std::string>();
        sr.snippet = r.value("snippet", std::string());
        if (sr.url.empty())
            throw DataError("search result with empty url");
        out.push_back(std::move(sr));
    }
    return out;
}

std::unique_ptr<InMemorySearchClient> InMemorySearchClient::from_json(const io::Json &fixture) {
    auto client = std::make_unique<InMemorySearchClient>();
    try {
        if (const auto it = fixture.find("queries"); it != fixture.end())
            for (const auto &[query, results] : it->items())
                client->add(query, results_from_json(results));
        if (const auto it = fixture.find("default"); it != fixture.end())
            client->set_default(results_from_json(*it));
    } catch (const io::Json::exception &e) {
        throw ConfigError(std::string("invalid search fixture: ") + e.what());
    }
    return client;
}

std::unique_ptr<InMemorySearchClient> InMemorySearchClient::load(const std::filesystem::path &path) {
    try {
        return from_json(io::Json::parse(io::read_file(path)));
    } catch (const io::Json::parse_error &e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void InMemorySearchClient::add(std::string query, std::vector<SearchResult> results) {
    results_[std::move(query)] = std::move(results);
}

void InMemorySearchClient::set_default(std::vector<SearchResult> results) {
    default_ = std::move(results);
}

std::vector<SearchResult> InMemorySearchClient::search(std::string_view query, std::size_t k) {
    {
        std::lock_guard lock(mutex_);
        log_.emplace_back(query);
    }
    if (failing_)
        throw TransportError("mock search failure");
    std::vector<SearchResult> out;
    if (const auto it = results_.find(query); it != results_.end())
        out = it->second;
    else if (default_)
        out = *default_;
    if (out.size() > k)
        out.resize(k);
    return out;
}

std::vector<std::string> InMemorySearchClient::query_log() const {
    std::lock_guard lock(mutex_);
    return log_;
}

std::unique_ptr<InMemoryPageFetcher> InMemoryPageFetcher::from_json(const io::Json &fixture) {
    auto fetcher = std::make_unique<InMemoryPageFetcher>();
    if (!fixture.is_object())
        throw ConfigError("page fixture must map urls to texts");
    for (const auto &[url, text] : fixture.items()) {
        if (!text.is_string())
            throw ConfigError("page fixture entry for '" + url + "' is not a string");
        fetcher->add(url, text.get<std::string>());
    }
    return fetcher;
}

std::unique_ptr<InMemoryPageFetcher> InMemoryPageFetcher::load(const std::filesystem::path &path) {
    try {
        return from_json(io::Json::parse(io::read_file(path)));
    } catch (const io::Json::parse_error &e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void InMemoryPageFetcher::add(std::string url, std::string text) {
    pages_[std::move(url)] = std::move(text);
}

std::string InMemoryPageFetcher::fetch(std::string_view url) {
    {
        std::lock_guard lock(mutex_);
        log_.emplace_back(url);
    }
    const auto it = pages_.find(url);
    if (it == pages_.end())
        throw TransportError("mock page not found: " + std::string(url), 404);
    return it->second;
}

std::vector<std::string> InMemoryPageFetcher::fetch_log() const {
    std::lock_guard lock(mutex_);
    return log_;
}

// ---------------------------------------------------------------------------
// Unlinkability

void UnlinkOptions::validate() const {
    if (k < 1)
        throw ConfigError("unlinkability k must be at least 1");
    if (max_query_chars < 32)
        throw ConfigError("max_query_chars must be at least 32");
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw ConfigError("unlinkability threshold must lie in [0, 1]");
    if (hosts.empty())
        throw ConfigError("unlinkability host list must not be empty");
}

namespace {

io::Json opt(const std::optional<double> &v) { return v ? io::Json(*v) : io::Json(nullptr); }

std::optional<double> opt_from(const io::Json &row, const char *key) {
    const auto it = row.find(key);
    if (it == row.end() || it->is_null())
        return std::nullopt;
    return it->get<double>();
}

} // namespace

io::Json UnlinkabilityRecord::to_json() const {
    return {{"synthetic_id", synthetic_id},
            {"queried", queried},
            {"reddit_hits", reddit_hits},
            {"pages_scored", pages_scored},
            {"fetch_failures", fetch_failures},
            {"max_bleu3", opt(max_bleu3)},
            {"max_meteor", opt(max_meteor)},
            {"max_rouge_l", opt(max_rouge_l)},
            {"max_cosine", opt(max_cosine)},
            {"verdict", verdict == Verdict::Kept ? "kept" : "discarded"}};
}

UnlinkabilityRecord UnlinkabilityRecord::from_json(const io::Json &row) {
    UnlinkabilityRecord r;
    r.synthetic_id = row.at("synthetic_id").get<std::string>();
    r.queried = row.at("queried").get<bool>();
    r.reddit_hits = row.value("reddit_hits", std::size_t{0});
    r.pages_scored = row.value("pages_scored", std::size_t{0});
    r.fetch_failures = row.value("fetch_failures", std::size_t{0});
    r.max_bleu3 = opt_from(row, "max_bleu3");
    r.max_meteor = opt_from(row, "max_meteor");
    r.max_rouge_l = opt_from(row, "max_rouge_l");
    r.max_cosine = opt_from(row, "max_cosine");
    const auto verdict = row.at("verdict").get<std::string>();
    if (verdict != "kept" && verdict != "discarded")
        throw DataError("unknown verdict '" + verdict + "'");
    r.verdict = verdict == "kept" ? Verdict::Kept : Verdict::Discarded;
    return r;
}

std::string build_query(std::string_view synthetic_text, std::size_t max_chars) {
    std::u32string normalized;
    bool pending_space = false;
    for (char32_t cp : utf8::decode(synthetic_text)) {
        const bool blank = utf8::is_space(cp) || cp == U'"' || cp == U'“' || cp == U'”';
        if (blank) {
            pending_space = !normalized.empty();
            continue;
        }
        if (pending_space)
            normalized.push_back(U' ');
        pending_space = false;
        normalized.push_back(cp);
    }
    if (normalized.size() <= max_chars)
        return utf8::encode(normalized);

    std::size_t cut = max_chars;
    if (normalized[cut] != U' ') {
        const auto space = normalized.rfind(U' ', cut);
        if (space != std::u32string::npos && space > 0)
            cut = space;
    }
    while (cut > 0 && normalized[cut - 1] == U' ')
        --cut;
    return utf8::encode(std::u32string_view(normalized).substr(0, cut));
}

std::string url_host(std::string_view url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos)
        return {};
    const auto scheme = utf8::to_lower(url.substr(0, scheme_end));
    if (scheme != "http" && scheme != "https")
        return {};
    auto rest = url.substr(scheme_end + 3);
    rest = rest.substr(0, rest.find_first_of("/?#"));
    if (const auto at = rest.rfind('@'); at != std::string_view::npos)
        rest = rest.substr(at + 1);
    if (const auto colon = rest.find(':'); colon != std::string_view::npos)
        rest = rest.substr(0, colon);
    while (!rest.empty() && rest.back() == '.')
        rest.remove_suffix(1);
    return utf8::to_lower(rest);
}

bool host_allowed(std::string_view host, std::span<const std::string> allowed) {
    if (host.empty())
        return false;
    return std::any_of(allowed.begin(), allowed.end(), [&](const std::string &suffix) {
        if (host == suffix)
            return true;
        return host.size() > suffix.size() + 1 &&
               host.substr(host.size() - suffix.size()) == suffix &&
               host[host.size() - suffix.size() - 1] == '.';
    });
}

UnlinkabilityRecord unlink_scan(const TextItem &synthetic, SearchClient &search,
                                PageFetcher &fetcher, const UnlinkOptions &options) {
    options.validate();
    UnlinkabilityRecord record;
    record.synthetic_id = synthetic.id;

    std::vector<SearchResult> results;
    try {
        results = search.search(build_query(synthetic.text, options.max_query_chars), options.k);
        record.queried = true;
    } catch (const TransportError &) {
        record.queried = false;
        return record;
    }
    if (results.size() > options.k)
        results.resize(options.k);

    const auto synthetic_tokens = textmetrics::tokenize(synthetic.text);
    auto raise = [](std::optional<double> &slot, double v) {
        slot = slot ? std::max(*slot, v) : v;
    };
    for (const auto &r : results) {
        if (!host_allowed(url_host(r.url), options.hosts))
            continue;
        ++record.reddit_hits;
        std::string page;
        try {
            page = fetcher.fetch(r.url);
        } catch (const TransportError &) {
            ++record.fetch_failures;
            continue;
        }
        const auto rep = textmetrics::pair_report(synthetic_tokens, textmetrics::tokenize(page));
        ++record.pages_scored;
        raise(record.max_bleu3, rep.bleu3);
        raise(record.max_meteor, rep.meteor);
        raise(record.max_rouge_l, rep.rouge_l_f);
        raise(record.max_cosine, rep.cosine);
    }
    record.verdict = record.max_meteor && *record.max_meteor > options.threshold
                         ? Verdict::Discarded
                         : Verdict::Kept;
    return record;
}

std::vector<UnlinkabilityRecord> unlink_corpus(std::span<const TextItem> corpus,
                                               SearchClient &search, PageFetcher &fetcher,
                                               const UnlinkOptions &options,
                                               std::size_t parallelism) {
    options.validate();
    std::vector<UnlinkabilityRecord> out(corpus.size());
    generation::parallel_for(corpus.size(), parallelism, [&](std::size_t i) {
        out[i] = unlink_scan(corpus[i], search, fetcher, options);
    });
    return out;
}

io::Json ThresholdAccounting::to_json() const {
    return {{"before", before}, {"after", after}, {"discarded", discarded}, {"unqueried", unqueried}};
}

ThresholdResult apply_threshold(std::span<const TextItem> corpus,
                                std::span<const UnlinkabilityRecord> records) {
    std::unordered_map<std::string_view, const UnlinkabilityRecord *> by_id;
    for (const auto &r : records)
        by_id.emplace(r.synthetic_id, &r);
    ThresholdResult result;
    result.accounting.before = corpus.size();
    for (const auto &item : corpus) {
        const auto it = by_id.find(item.id);
        if (it == by_id.end())
            throw DataError("no unlinkability record for post '" + item.id + "'");
        const auto &rec = *it->second;
        if (!rec.queried)
            ++result.accounting.unqueried;
        if (rec.verdict == Verdict::Discarded) {
            ++result.accounting.discarded;
            continue;
        }
        result.kept.push_back(item);
    }
    result.accounting.after = result.kept.size();
    return result;
}

// ---------------------------------------------------------------------------
// Survey

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    for (auto &f : fields)
        f = std::string(utf8::trim(f));
    return fields;
}

bool parse_bool(const std::string &s) {
    const auto v = utf8::to_lower(s);
    if (v == "1" || v == "true" || v == "yes" || v == "y")
        return true;
    if (v == "0" || v == "false" || v == "no" || v == "n")
        return false;
    throw DataError("cannot read '" + s + "' as a boolean");
}

} // namespace

std::vector<SurveyResponse> load_survey_csv(const std::filesystem::path &path) {
    std::vector<SurveyResponse> out;
    std::unordered_map<std::string, std::size_t> column;
    io::for_each_line(path, [&](std::size_t line_no, std::string_view line) {
        const auto fields = split_csv_line(line);
        if (column.empty()) {
            for (std::size_t i = 0; i < fields.size(); ++i)
                column[utf8::to_lower(fields[i])] = i;
            for (const char *need : {"respondent", "set", "correct"})
                if (!column.count(need))
                    throw ParseError(path.string(), line_no,
                                     std::string("header lacks column '") + need + "'");
            return;
        }
        try {
            SurveyResponse r;
            r.respondent = fields.at(column["respondent"]);
            r.set = std::stoi(fields.at(column["set"]));
            r.correct = parse_bool(fields.at(column["correct"]));
            out.push_back(std::move(r));
        } catch (const std::exception &e) {
            throw ParseError(path.string(), line_no, e.what());
        }
    });
    return out;
}

std::optional<double> SetTally::observed() const {
    if (responses == 0)
        return std::nullopt;
    return static_cast<double>(correct) / static_cast<double>(responses);
}

io::Json SurveyTally::to_json() const {
    io::Json rows = io::Json::array();
    for (std::size_t s = 0; s < sets.size(); ++s) {
        const auto obs = sets[s].observed();
        rows.push_back({{"set", s + 1},
                        {"responses", sets[s].responses},
                        {"correct", sets[s].correct},
                        {"observed_p", obs ? io::Json(*obs) : io::Json(nullptr)},
                        {"expected_p", sets[s].expected_p}});
    }
    return {{"sets", std::move(rows)}};
}

std::vector<double> default_expected_probabilities() { return {0.5, 1.0 / 3.0, 0.25}; }

SurveyTally tally_survey(std::span<const SurveyResponse> responses,
                         std::span<const double> expected_p) {
    const auto defaults = default_expected_probabilities();
    if (expected_p.empty())
        expected_p = defaults;
    SurveyTally tally;
    for (double p : expected_p) {
        if (!(p > 0.0 && p < 1.0))
            throw ConfigError("expected probabilities must lie in (0, 1)");
        tally.sets.push_back({0, 0, p});
    }
    for (const auto &r : responses) {
        if (r.set < 1 || static_cast<std::size_t>(r.set) > tally.sets.size())
            throw DataError("unknown survey set " + std::to_string(r.set));
        auto &s = tally.sets[static_cast<std::size_t>(r.set - 1)];
        ++s.responses;
        if (r.correct)
            ++s.correct;
    }
    return tally;
}

io::Json ChiSquareResult::to_json() const {
    return {{"statistic", statistic},
            {"degrees_of_freedom", degrees_of_freedom},
            {"p_value", p_value},
            {"low_expected_count", low_expected_count},
            {"included_sets", included_sets}};
}

ChiSquareResult chi_square_gof(std::span<const SetTally> sets) {
    ChiSquareResult result;
    for (std::size_t s = 0; s < sets.size(); ++s) {
        const auto &t = sets[s];
        if (t.responses == 0)
            continue;
        if (t.correct > t.responses)
            throw DataError("set " + std::to_string(s + 1) + " has more correct than responses");
        if (!(t.expected_p > 0.0 && t.expected_p < 1.0))
            throw DataError("expected probability of set " + std::to_string(s + 1) +
                            " must lie in (0, 1)");
        const double n = static_cast<double>(t.responses);
        const double k = static_cast<double>(t.correct);
        const double e_hit = n * t.expected_p;
        const double e_miss = n * (1.0 - t.expected_p);
        if (e_hit < 1.0 || e_miss < 1.0)
            result.low_expected_count = true;
        result.statistic += (k - e_hit) * (k - e_hit) / e_hit +
                            ((n - k) - e_miss) * ((n - k) - e_miss) / e_miss;
        result.included_sets.push_back(s + 1);
    }
    if (result.included_sets.empty())
        throw DataError("chi-square test needs at least one set with responses");
    result.degrees_of_freedom = result.included_sets.size();
    result.p_value =
        stats::chi_square_sf(result.statistic, static_cast<double>(result.degrees_of_freedom));
    return result;
}

ChiSquareResult chi_square_gof(const SurveyTally &tally) { return chi_square_gof(tally.sets); }

} // namespace synthpii::privacy
