#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "synthpii/corpus.hpp"
#include "synthpii/error.hpp"
#include "temp_dir.hpp"

using namespace synthpii;
using namespace synthpii::corpus;

namespace {

Post make(std::string id, std::string author, std::string sub, std::string text) {
    Post p;
    p.id = std::move(id);
    p.author = std::move(author);
    p.subreddit = std::move(sub);
    p.text = std::move(text);
    return p;
}

Posts numbered(std::size_t n) {
    Posts posts;
    for (std::size_t i = 0; i < n; ++i)
        posts.push_back(make("p" + std::to_string(i), "u" + std::to_string(i % 97), "s",
                             "I wrote post number " + std::to_string(i)));
    return posts;
}

std::vector<std::string> ids(const Posts &posts) {
    std::vector<std::string> out;
    for (const auto &p : posts)
        out.push_back(p.id);
    return out;
}

} // namespace

TEST_CASE("timestamps normalise to UTC") {
    const auto t = parse_timestamp("2023-04-01T12:00:00+02:00");
    REQUIRE(t);
    CHECK(format_timestamp(*t) == "2023-04-01T10:00:00Z");
    CHECK(format_timestamp(*parse_timestamp("2023-03-14T09:26:53.123Z")) == "2023-03-14T09:26:53Z");
    CHECK(format_timestamp(*parse_timestamp("2023-03-14")) == "2023-03-14T00:00:00Z");
    CHECK_FALSE(parse_timestamp("2023-02-30T00:00:00Z"));
    CHECK_FALSE(parse_timestamp("yesterday"));
    CHECK_FALSE(parse_timestamp("2023-03-14T09:26:53 PST"));
}

TEST_CASE("posts round trip through JSON") {
    const auto row = io::Json::parse(
        R"({"id":42,"author":"a","subreddit":"s","text":"t","created_at":"2023-01-02T03:04:05Z","kind":"comment","over_18":false})");
    const auto p = post_from_json(row);
    CHECK(p.id == "42");
    CHECK(p.kind == PostKind::Comment);
    REQUIRE(p.over_18);
    CHECK_FALSE(*p.over_18);
    CHECK(post_from_json(to_json(p)) == p);

    CHECK_THROWS_AS(post_from_json(io::Json::parse(R"({"id":"x","author":"a","text":"t"})")), DataError);
    CHECK_THROWS_AS(post_from_json(io::Json::parse(R"({"id":"","author":"a","subreddit":"s","text":"t"})")),
                    DataError);
    CHECK_THROWS_AS(
        post_from_json(io::Json::parse(R"({"id":"x","author":"a","subreddit":"s","text":"t","kind":"reply"})")),
        DataError);
    CHECK_THROWS_AS(post_from_json(io::Json::parse("[1,2]")), DataError);
}

TEST_CASE("load_posts strict and lenient modes") {
    testing::TempDir dir;
    const auto p = dir.write("posts.jsonl",
                             "{\"id\":\"a\",\"author\":\"x\",\"subreddit\":\"s\",\"text\":\"I am\"}\n"
                             "not json\n"
                             "{\"id\":\"a\",\"author\":\"y\",\"subreddit\":\"s\",\"text\":\"dup\"}\n"
                             "{\"id\":\"b\",\"author\":\"y\",\"subreddit\":\"s\",\"text\":\"fine\"}\n");
    try {
        load_posts(p);
        FAIL("expected ParseError");
    } catch (const ParseError &e) {
        CHECK(e.record() == 2);
        CHECK(std::string(e.what()).find("posts.jsonl:2") != std::string::npos);
    }
    const auto lenient = load_posts(p, LoadMode::Lenient);
    CHECK(ids(lenient.posts) == std::vector<std::string>{"a", "b"});
    CHECK(lenient.skipped == 2);
    REQUIRE(lenient.diagnostics.size() == 2);
    CHECK(lenient.diagnostics[1].find("duplicate id 'a'") != std::string::npos);
}

TEST_CASE("blocklist parsing") {
    const auto names = load_blocklist(testing::fixture("filter/blocklist.txt"));
    CHECK(names == std::set<std::string>{"gonewild", "nsfwconfessions"});
}

TEST_CASE("nsfw filter matches subreddits case-insensitively and honours over_18") {
    FilterConfig cfg;
    cfg.nsfw_subreddits = {"gonewild"};
    Posts posts{make("1", "a", "GoneWild", "I"), make("2", "a", "pics", "I"),
                make("3", "a", "pics", "I")};
    posts[2].over_18 = true;
    CHECK(ids(filter_nsfw(posts, cfg)) == std::vector<std::string>{"2"});
}

TEST_CASE("first-person marker needs a whole-token match") {
    const std::vector<std::string> lex = FilterConfig{}.pronoun_lexicon;
    CHECK(has_first_person_marker("I went home", lex));
    CHECK(has_first_person_marker("this is MINE.", lex));
    CHECK(has_first_person_marker("I'm tired", lex));
    CHECK(has_first_person_marker("...us?", lex));
    CHECK_FALSE(has_first_person_marker("We examined the data", std::vector<std::string>{"mine"}));
    CHECK_FALSE(has_first_person_marker("examined", lex));
    CHECK_FALSE(has_first_person_marker("Mimicry and iMessage", lex));
    CHECK_FALSE(has_first_person_marker("usually myopic", lex));
    CHECK_FALSE(has_first_person_marker("", lex));
}

TEST_CASE("min-length filter boundary") {
    FilterConfig cfg;
    cfg.min_words = 3;
    Posts posts{make("two", "a", "s", "I agree."), make("three", "a", "s", "I  agree  fully"),
                make("tabs", "a", "s", "I\tagree\nfully")};
    CHECK(ids(filter_min_length(posts, cfg)) == std::vector<std::string>{"three", "tabs"});
}

TEST_CASE("sample size rounding") {
    CHECK(sample_size(65282, 0.05) == 3264);
    CHECK(sample_size(10, 0.5) == 5);
    CHECK(sample_size(3, 0.5) == 2);
    CHECK(sample_size(0, 0.5) == 0);
    CHECK(sample_size(7, 1.0) == 7);
}

TEST_CASE("selection sample is deterministic, ordered and of exact size") {
    for (std::size_t n : {0u, 1u, 5u, 100u, 65282u}) {
        const std::size_t k = sample_size(n, 0.05);
        const auto a = selection_sample(n, k, 11);
        CAPTURE(n);
        CHECK(a.size() == k);
        CHECK(std::is_sorted(a.begin(), a.end()));
        CHECK(std::adjacent_find(a.begin(), a.end()) == a.end());
        CHECK(std::all_of(a.begin(), a.end(), [&](std::size_t i) { return i < n; }));
        CHECK(selection_sample(n, k, 11) == a);
    }
    CHECK(selection_sample(1000, 50, 1) != selection_sample(1000, 50, 2));
    CHECK(selection_sample(4, 9, 3) == std::vector<std::size_t>{0, 1, 2, 3});
}

TEST_CASE("selection sample includes each index with probability k/n") {
    // 20000 draws of 3 out of 10: each index expected 6000 times, sd about 65.
    std::vector<int> hits(10, 0);
    std::map<std::vector<std::size_t>, int> subsets;
    for (std::uint64_t seed = 0; seed < 20000; ++seed) {
        const auto s = selection_sample(10, 3, seed);
        for (auto i : s)
            ++hits[i];
        ++subsets[s];
    }
    for (int h : hits)
        CHECK(std::abs(h - 6000) < 400);
    // All C(10,3) = 120 subsets occur.
    CHECK(subsets.size() == 120);
}

TEST_CASE("sample_fraction preserves input order") {
    FilterConfig cfg;
    cfg.sample_fraction = 0.05;
    cfg.sample_seed = 5;
    const auto posts = numbered(2000);
    const auto out = sample_fraction(posts, cfg);
    REQUIRE(out.size() == 100);
    std::size_t last = 0;
    for (const auto &p : out) {
        const auto pos = static_cast<std::size_t>(std::stoul(p.id.substr(1)));
        CHECK(pos >= last);
        last = pos;
    }
}

TEST_CASE("augment_with_subreddit") {
    const auto p = make("1", "a", "relationships", "I moved.");
    CHECK(augment_with_subreddit(p) == "Subreddit: r/relationships\nI moved.");
}

TEST_CASE("filter pipeline on the fixture corpus") {
    const auto posts = load_posts(testing::fixture("filter/posts.jsonl")).posts;
    REQUIRE(posts.size() == 10);
    FilterConfig cfg;
    cfg.nsfw_subreddits = load_blocklist(testing::fixture("filter/blocklist.txt"));
    cfg.sample_fraction = 0.5;
    cfg.sample_seed = 7;
    const auto [kept, ledger] = run_filter_pipeline(posts, cfg);
    REQUIRE(ledger.stages.size() == 5);
    CHECK(ledger.stages[0] == LedgerStage{"input", 10, 9});
    CHECK(ledger.stages[1] == LedgerStage{"nsfw", 8, 7});
    CHECK(ledger.stages[2] == LedgerStage{"first_person", 6, 5});
    CHECK(ledger.stages[3] == LedgerStage{"min_length", 4, 3});
    CHECK(ledger.stages[4].stage == "sample");
    CHECK(ledger.stages[4].rows == 2);
    CHECK(kept.size() == 2);
    CHECK(ledger.sampling_algorithm == kSamplingAlgorithm);

    const auto j = ledger.to_json();
    CHECK(j["sample_seed"] == 7);
    CHECK(j["stages"][3]["rows"] == 4);

    // Surviving ids before sampling.
    FilterConfig all = cfg;
    all.sample_fraction = 1.0;
    CHECK(ids(run_filter_pipeline(posts, all).first) ==
          std::vector<std::string>{"p01", "p08", "p09", "p10"});
}

TEST_CASE("ledger counts never increase along the cascade") {
    FilterConfig cfg;
    cfg.nsfw_subreddits = {"s3"};
    cfg.sample_fraction = 0.3;
    Posts posts;
    const char *texts[] = {"I", "we did it", "nobody here", "my own words here", "Us too"};
    for (int i = 0; i < 200; ++i)
        posts.push_back(make("p" + std::to_string(i), "u" + std::to_string(i % 13),
                             "s" + std::to_string(i % 5), texts[i % 5]));
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        cfg.sample_seed = seed;
        const auto ledger = run_filter_pipeline(posts, cfg).second;
        for (std::size_t i = 1; i < ledger.stages.size(); ++i) {
            CHECK(ledger.stages[i].rows <= ledger.stages[i - 1].rows);
            CHECK(ledger.stages[i].unique_users <= ledger.stages[i - 1].unique_users);
            CHECK(ledger.stages[i].unique_users <= ledger.stages[i].rows);
        }
    }
}

TEST_CASE("filter config validation") {
    FilterConfig cfg;
    cfg.sample_fraction = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = FilterConfig{};
    cfg.nsfw_subreddits = {"GoneWild"};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = FilterConfig{};
    cfg.pronoun_lexicon.clear();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = FilterConfig{};
    cfg.min_words = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
