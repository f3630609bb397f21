#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "synthpii/jsonl.hpp"
#include "synthpii/records.hpp"

namespace synthpii::privacy {

struct SearchResult {
    std::size_t rank = 0; ///< 1-based
    std::string url;
    std::string snippet;

    friend bool operator==(const SearchResult &, const SearchResult &) = default;
};

/// Web search backend. Returns at most `k` results in rank order; throws
/// TransportError on network failure.
class SearchClient {
  public:
    virtual ~SearchClient() = default;
    virtual std::vector<SearchResult> search(std::string_view query, std::size_t k) = 0;
};

/// Fetches a page and reduces it to visible text; throws TransportError on failure.
class PageFetcher {
  public:
    virtual ~PageFetcher() = default;
    virtual std::string fetch(std::string_view url) = 0;
};

std::vector<SearchResult> results_from_json(const io::Json &doc);

/// Query-keyed canned results, with an optional fallback for unknown queries.
/// Records every query it receives.
class InMemorySearchClient final : public SearchClient {
  public:
    InMemorySearchClient() = default;

    /// `{"queries": {"<query>": [{rank, url, snippet}]}, "default": [...]}`
    static std::unique_ptr<InMemorySearchClient> from_json(const io::Json &fixture);
    static std::unique_ptr<InMemorySearchClient> load(const std::filesystem::path &path);

    void add(std::string query, std::vector<SearchResult> results);
    void set_default(std::vector<SearchResult> results);
    /// Every query fails with TransportError.
    void set_failing(bool failing) { failing_ = failing; }

    std::vector<SearchResult> search(std::string_view query, std::size_t k) override;
    std::vector<std::string> query_log() const;

  private:
    std::map<std::string, std::vector<SearchResult>, std::less<>> results_;
    std::optional<std::vector<SearchResult>> default_;
    bool failing_ = false;
    mutable std::mutex mutex_;
    std::vector<std::string> log_;
};

/// URL-keyed page texts; unknown URLs fail with TransportError. Records every fetch.
class InMemoryPageFetcher final : public PageFetcher {
  public:
    InMemoryPageFetcher() = default;

    /// `{"<url>": "<page text>", ...}`
    static std::unique_ptr<InMemoryPageFetcher> from_json(const io::Json &fixture);
    static std::unique_ptr<InMemoryPageFetcher> load(const std::filesystem::path &path);

    void add(std::string url, std::string text);

    std::string fetch(std::string_view url) override;
    std::vector<std::string> fetch_log() const;

  private:
    std::map<std::string, std::string, std::less<>> pages_;
    mutable std::mutex mutex_;
    std::vector<std::string> log_;
};

struct UnlinkOptions {
    std::size_t k = 10;
    double threshold = 0.5;
    std::size_t max_query_chars = 256;
    /// A result counts as a hit when its host equals one of these or is a subdomain of one.
    std::vector<std::string> hosts{"reddit.com"};

    void validate() const;
};

enum class Verdict { Kept, Discarded };

struct UnlinkabilityRecord {
    std::string synthetic_id;
    bool queried = false;
    std::size_t reddit_hits = 0;
    std::size_t pages_scored = 0;
    std::size_t fetch_failures = 0;
    std::optional<double> max_bleu3;
    std::optional<double> max_meteor;
    std::optional<double> max_rouge_l;
    std::optional<double> max_cosine;
    Verdict verdict = Verdict::Kept;

    io::Json to_json() const;
    static UnlinkabilityRecord from_json(const io::Json &row);
};

/// Quotes and line breaks become spaces, whitespace runs collapse, and text
/// longer than `max_chars` scalars is cut back to the last word boundary.
std::string build_query(std::string_view synthetic_text, std::size_t max_chars = 256);

/// Lowercased host of an absolute http(s) URL; empty when it cannot be parsed.
std::string url_host(std::string_view url);
bool host_allowed(std::string_view host, std::span<const std::string> allowed);

/// Searches for the synthetic text, scores every allowed-host result page
/// against it and discards the post when the best METEOR exceeds the threshold.
UnlinkabilityRecord unlink_scan(const TextItem &synthetic, SearchClient &search,
                                PageFetcher &fetcher, const UnlinkOptions &options = {});

/// unlink_scan over a corpus on up to `parallelism` threads; output in input order.
std::vector<UnlinkabilityRecord> unlink_corpus(std::span<const TextItem> corpus,
                                               SearchClient &search, PageFetcher &fetcher,
                                               const UnlinkOptions &options = {},
                                               std::size_t parallelism = 1);

struct ThresholdAccounting {
    std::size_t before = 0;
    std::size_t after = 0;
    std::size_t discarded = 0;
    /// Posts whose search failed; kept, but worth re-scanning.
    std::size_t unqueried = 0;

    io::Json to_json() const;
};

struct ThresholdResult {
    std::vector<TextItem> kept;
    ThresholdAccounting accounting;
};

/// Drops discarded posts. Throws DataError when a post has no record.
ThresholdResult apply_threshold(std::span<const TextItem> corpus,
                                std::span<const UnlinkabilityRecord> records);

// ---------------------------------------------------------------------------
// Indistinguishability survey

struct SurveyResponse {
    std::string respondent;
    int set = 0;
    bool correct = false;
};

/// CSV with header `respondent,set,correct`; `correct` accepts 1/0, true/false, yes/no.
std::vector<SurveyResponse> load_survey_csv(const std::filesystem::path &path);

struct SetTally {
    std::size_t responses = 0;
    std::size_t correct = 0;
    double expected_p = 0.5;

    /// correct / responses; empty when there were no responses.
    std::optional<double> observed() const;
};

struct SurveyTally {
    /// Index 0 holds set 1.
    std::vector<SetTally> sets;

    io::Json to_json() const;
};

/// Chance levels of the three identification tasks.
std::vector<double> default_expected_probabilities();

/// Counts responses per set. Throws DataError for a set id outside 1..expected.size().
SurveyTally tally_survey(std::span<const SurveyResponse> responses,
                         std::span<const double> expected_p = {});

struct ChiSquareResult {
    double statistic = 0.0;
    std::size_t degrees_of_freedom = 0;
    double p_value = 1.0;
    /// Some expected cell count fell below 1.
    bool low_expected_count = false;
    std::vector<std::size_t> included_sets; ///< 1-based

    io::Json to_json() const;
};

/// Binomial goodness-of-fit summed over the sets that have responses:
/// sum of (O - E)^2 / E over the correct and incorrect cells, df = number of sets.
ChiSquareResult chi_square_gof(std::span<const SetTally> sets);
ChiSquareResult chi_square_gof(const SurveyTally &tally);

} // namespace synthpii::privacy
