#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "synthpii/jsonl.hpp"

namespace synthpii::corpus {

enum class PostKind { Post, Comment };

/// One social-media record.
struct Post {
    std::string id;
    std::string author;
    std::string subreddit;
    std::string text;
    std::optional<std::chrono::sys_seconds> created_at;
    PostKind kind = PostKind::Post;
    /// Per-record NSFW flag, honoured by filter_nsfw when present.
    std::optional<bool> over_18;

    friend bool operator==(const Post &, const Post &) = default;
};

using Posts = std::vector<Post>;

struct FilterConfig {
    std::set<std::string> nsfw_subreddits;
    std::vector<std::string> pronoun_lexicon{"i", "me", "myself", "my", "mine",
                                             "we", "us", "our", "ours"};
    std::size_t min_words = 3;
    double sample_fraction = 0.05;
    std::uint64_t sample_seed = 0;

    /// Throws ConfigError when an invariant does not hold.
    void validate() const;
};

struct LedgerStage {
    std::string stage;
    std::size_t rows = 0;
    std::size_t unique_users = 0;

    friend bool operator==(const LedgerStage &, const LedgerStage &) = default;
};

/// Stage-by-stage accounting of the filter cascade.
struct FilterLedger {
    std::vector<LedgerStage> stages;
    std::string sampling_algorithm;
    std::uint64_t sample_seed = 0;
    double sample_fraction = 1.0;

    io::Json to_json() const;
};

/// Identifier recorded in the ledger for the sampling procedure below.
inline constexpr std::string_view kSamplingAlgorithm = "mt19937_64/knuth-selection-S/v1";

enum class LoadMode { Strict, Lenient };

struct LoadResult {
    Posts posts;
    /// Lenient mode only: malformed lines that were skipped.
    std::size_t skipped = 0;
    std::vector<std::string> diagnostics;
};

/// Reads JSONL posts. Strict mode throws ParseError naming the first bad line;
/// lenient mode skips bad lines and counts them.
LoadResult load_posts(const std::filesystem::path &path, LoadMode mode = LoadMode::Strict);

Post post_from_json(const io::Json &row);
io::Json to_json(const Post &post);
void save_posts(const std::filesystem::path &path, std::span<const Post> posts);

std::optional<std::chrono::sys_seconds> parse_timestamp(std::string_view iso8601);
std::string format_timestamp(std::chrono::sys_seconds t);

/// Lowercase subreddit names, one per line; blank lines and `#` comments ignored.
std::set<std::string> load_blocklist(const std::filesystem::path &path);

Posts filter_nsfw(std::span<const Post> posts, const FilterConfig &config);
Posts filter_first_person(std::span<const Post> posts, const FilterConfig &config);
Posts filter_min_length(std::span<const Post> posts, const FilterConfig &config);
Posts sample_fraction(std::span<const Post> posts, const FilterConfig &config);

/// True when `text` contains a lexicon word as a whole token (tokens split on
/// non-alphanumeric boundaries, compared lowercase).
bool has_first_person_marker(std::string_view text, std::span<const std::string> lexicon);

/// Indices of a uniform size-`k` subset of [0, n) in ascending order, drawn
/// with the algorithm named by kSamplingAlgorithm.
std::vector<std::size_t> selection_sample(std::size_t n, std::size_t k, std::uint64_t seed);

/// Number of elements sample_fraction keeps out of `n`.
std::size_t sample_size(std::size_t n, double fraction) noexcept;

/// `Subreddit: r/<name>` followed by a newline and the post text. Not idempotent.
std::string augment_with_subreddit(const Post &post);

std::size_t unique_authors(std::span<const Post> posts);

/// nsfw -> first_person -> min_length -> sample. The ledger starts with an
/// `input` stage and records one entry per stage after it.
std::pair<Posts, FilterLedger> run_filter_pipeline(std::span<const Post> posts,
                                                   const FilterConfig &config);

} // namespace synthpii::corpus
