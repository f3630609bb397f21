#include "synthpii/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <unordered_set>

#include "synthpii/error.hpp"
#include "synthpii/utf8.hpp"

namespace synthpii::corpus {

void FilterConfig::validate() const {
    if (pronoun_lexicon.empty())
        throw ConfigError("pronoun lexicon must not be empty");
    if (min_words < 1)
        throw ConfigError("min_words must be at least 1");
    if (!(sample_fraction > 0.0 && sample_fraction <= 1.0))
        throw ConfigError("sample_fraction must lie in (0, 1]");
    for (const auto &name : nsfw_subreddits)
        if (name != utf8::to_lower(name))
            throw ConfigError("nsfw subreddit '" + name + "' is not lowercase");
}

io::Json FilterLedger::to_json() const {
    io::Json stages_json = io::Json::array();
    for (const auto &s : stages)
        stages_json.push_back({{"stage", s.stage}, {"rows", s.rows}, {"unique_users", s.unique_users}});
    return {{"sampling_algorithm", sampling_algorithm},
            {"sample_seed", sample_seed},
            {"sample_fraction", sample_fraction},
            {"stages", std::move(stages_json)}};
}

std::optional<std::chrono::sys_seconds> parse_timestamp(std::string_view s) {
    using namespace std::chrono;
    const std::string str(s);
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0, consumed = 0;
    if (std::sscanf(str.c_str(), "%4d-%2d-%2d%n", &y, &mo, &d, &consumed) != 3 || consumed != 10)
        return std::nullopt;
    std::string_view rest = s.substr(10);
    if (!rest.empty()) {
        if (rest[0] != 'T' && rest[0] != ' ')
            return std::nullopt;
        const std::string time(rest.substr(1));
        if (std::sscanf(time.c_str(), "%2d:%2d:%2d%n", &h, &mi, &sec, &consumed) != 3 ||
            consumed != 8)
            return std::nullopt;
        rest = rest.substr(9);
        if (!rest.empty() && rest[0] == '.') {
            std::size_t k = 1;
            while (k < rest.size() && rest[k] >= '0' && rest[k] <= '9')
                ++k;
            rest = rest.substr(k);
        }
    }
    int offset_minutes = 0;
    if (rest == "Z" || rest.empty()) {
        // UTC
    } else if ((rest[0] == '+' || rest[0] == '-') && rest.size() == 6 && rest[3] == ':') {
        int oh = 0, om = 0;
        const std::string off(rest.substr(1));
        if (std::sscanf(off.c_str(), "%2d:%2d", &oh, &om) != 2)
            return std::nullopt;
        offset_minutes = (rest[0] == '+' ? 1 : -1) * (oh * 60 + om);
    } else {
        return std::nullopt;
    }
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || sec > 60)
        return std::nullopt;
    return sys_days{ymd} + hours{h} + minutes{mi} + seconds{sec} - minutes{offset_minutes};
}

std::string format_timestamp(std::chrono::sys_seconds t) {
    using namespace std::chrono;
    const auto day_point = floor<days>(t);
    const year_month_day ymd{day_point};
    const hh_mm_ss hms{t - day_point};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

namespace {

std::string required_string(const io::Json &row, const char *key) {
    const auto it = row.find(key);
    if (it == row.end())
        throw DataError(std::string("missing field '") + key + "'");
    if (!it->is_string())
        throw DataError(std::string("field '") + key + "' must be a string");
    return it->get<std::string>();
}

} // namespace

Post post_from_json(const io::Json &row) {
    if (!row.is_object())
        throw DataError("record is not a JSON object");
    Post p;
    // Numeric ids are common in exports; normalise them to strings.
    if (const auto it = row.find("id"); it != row.end() && it->is_number_integer())
        p.id = std::to_string(it->get<long long>());
    else
        p.id = required_string(row, "id");
    if (p.id.empty())
        throw DataError("field 'id' is empty");
    p.author = required_string(row, "author");
    p.subreddit = required_string(row, "subreddit");
    p.text = required_string(row, "text");
    if (const auto it = row.find("created_at"); it != row.end() && !it->is_null()) {
        if (!it->is_string())
            throw DataError("field 'created_at' must be an ISO-8601 string");
        p.created_at = parse_timestamp(it->get<std::string>());
        if (!p.created_at)
            throw DataError("unparseable created_at '" + it->get<std::string>() + "'");
    }
    if (const auto it = row.find("kind"); it != row.end() && !it->is_null()) {
        const auto kind = it->is_string() ? it->get<std::string>() : std::string();
        if (kind == "post")
            p.kind = PostKind::Post;
        else if (kind == "comment")
            p.kind = PostKind::Comment;
        else
            throw DataError("field 'kind' must be \"post\" or \"comment\"");
    }
    if (const auto it = row.find("over_18"); it != row.end() && !it->is_null()) {
        if (!it->is_boolean())
            throw DataError("field 'over_18' must be a boolean");
        p.over_18 = it->get<bool>();
    }
    return p;
}

io::Json to_json(const Post &post) {
    io::Json row{{"id", post.id},
                 {"author", post.author},
                 {"subreddit", post.subreddit},
                 {"text", post.text}};
    if (post.created_at)
        row["created_at"] = format_timestamp(*post.created_at);
    row["kind"] = post.kind == PostKind::Post ? "post" : "comment";
    if (post.over_18)
        row["over_18"] = *post.over_18;
    return row;
}

LoadResult load_posts(const std::filesystem::path &path, LoadMode mode) {
    LoadResult result;
    std::unordered_set<std::string> seen;
    io::for_each_line(path, [&](std::size_t line_no, std::string_view line) {
        try {
            auto row = io::Json::parse(line);
            Post post = post_from_json(row);
            if (!seen.insert(post.id).second)
                throw DataError("duplicate id '" + post.id + "'");
            result.posts.push_back(std::move(post));
        } catch (const std::exception &e) {
            if (mode == LoadMode::Strict)
                throw ParseError(path.string(), line_no, e.what());
            ++result.skipped;
            result.diagnostics.push_back(path.string() + ":" + std::to_string(line_no) + ": " +
                                         e.what());
        }
    });
    return result;
}

void save_posts(const std::filesystem::path &path, std::span<const Post> posts) {
    std::vector<io::Json> rows;
    rows.reserve(posts.size());
    for (const auto &p : posts)
        rows.push_back(to_json(p));
    io::write_jsonl(path, rows);
}

std::set<std::string> load_blocklist(const std::filesystem::path &path) {
    std::set<std::string> names;
    io::for_each_line(path, [&](std::size_t, std::string_view line) {
        auto name = utf8::trim(line);
        if (name.empty() || name.front() == '#')
            return;
        if (name.size() > 2 && name.substr(0, 2) == "r/")
            name.remove_prefix(2);
        names.insert(utf8::to_lower(name));
    });
    return names;
}

Posts filter_nsfw(std::span<const Post> posts, const FilterConfig &config) {
    Posts out;
    for (const auto &p : posts) {
        if (p.over_18.value_or(false))
            continue;
        if (config.nsfw_subreddits.count(utf8::to_lower(p.subreddit)))
            continue;
        out.push_back(p);
    }
    return out;
}

bool has_first_person_marker(std::string_view text, std::span<const std::string> lexicon) {
    std::string token;
    auto hit = [&] {
        return !token.empty() && std::find(lexicon.begin(), lexicon.end(), token) != lexicon.end();
    };
    for (char32_t cp : utf8::decode(text)) {
        if (utf8::is_word(cp)) {
            utf8::append(token, utf8::to_lower(cp));
            continue;
        }
        if (hit())
            return true;
        token.clear();
    }
    return hit();
}

Posts filter_first_person(std::span<const Post> posts, const FilterConfig &config) {
    Posts out;
    for (const auto &p : posts)
        if (has_first_person_marker(p.text, config.pronoun_lexicon))
            out.push_back(p);
    return out;
}

Posts filter_min_length(std::span<const Post> posts, const FilterConfig &config) {
    Posts out;
    for (const auto &p : posts)
        if (utf8::split_whitespace(p.text).size() >= config.min_words)
            out.push_back(p);
    return out;
}

std::size_t sample_size(std::size_t n, double fraction) noexcept {
    const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    return std::min(k, n);
}

std::vector<std::size_t> selection_sample(std::size_t n, std::size_t k, std::uint64_t seed) {
    k = std::min(k, n);
    std::vector<std::size_t> out;
    out.reserve(k);
    if (k == n) {
        for (std::size_t t = 0; t < n; ++t)
            out.push_back(t);
        return out;
    }
    // Selection sampling (Knuth, Algorithm S): one pass, uniform without
    // replacement, output keeps input order. Uniforms are built from the raw
    // 64-bit engine output so results do not depend on the standard library's
    // distribution implementations.
    std::mt19937_64 engine(seed);
    for (std::size_t t = 0; t < n && out.size() < k; ++t) {
        const double u = static_cast<double>(engine() >> 11) * 0x1.0p-53;
        if (static_cast<double>(n - t) * u < static_cast<double>(k - out.size()))
            out.push_back(t);
    }
    return out;
}

Posts sample_fraction(std::span<const Post> posts, const FilterConfig &config) {
    Posts out;
    for (std::size_t i :
         selection_sample(posts.size(), sample_size(posts.size(), config.sample_fraction),
                          config.sample_seed))
        out.push_back(posts[i]);
    return out;
}

std::string augment_with_subreddit(const Post &post) {
    return "Subreddit: r/" + post.subreddit + "\n" + post.text;
}

std::size_t unique_authors(std::span<const Post> posts) {
    std::unordered_set<std::string_view> authors;
    for (const auto &p : posts)
        authors.insert(p.author);
    return authors.size();
}

std::pair<Posts, FilterLedger> run_filter_pipeline(std::span<const Post> posts,
                                                   const FilterConfig &config) {
    config.validate();
    FilterLedger ledger;
    ledger.sampling_algorithm = std::string(kSamplingAlgorithm);
    ledger.sample_seed = config.sample_seed;
    ledger.sample_fraction = config.sample_fraction;
    auto record = [&](std::string stage, std::span<const Post> rows) {
        ledger.stages.push_back({std::move(stage), rows.size(), unique_authors(rows)});
    };

    record("input", posts);
    Posts current = filter_nsfw(posts, config);
    record("nsfw", current);
    current = filter_first_person(current, config);
    record("first_person", current);
    current = filter_min_length(current, config);
    record("min_length", current);
    current = sample_fraction(current, config);
    record("sample", current);
    return {std::move(current), std::move(ledger)};
}

} // namespace synthpii::corpus
