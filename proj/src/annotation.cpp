#include "synthpii/annotation.hpp"

#include <algorithm>
#include <tuple>
#include <unordered_map>

#include "synthpii/error.hpp"
#include "synthpii/utf8.hpp"

namespace synthpii::annotation {

namespace {

struct Names {
    std::string_view label;
    std::string_view ident;
};

constexpr std::array<Names, kCategoryCount> kNames{{
    {"Name", "Name"},
    {"Birthdate", "Birthdate"},
    {"Location", "Location"},
    {"Country", "Country"},
    {"Marital Status", "MaritalStatus"},
    {"Religion", "Religion"},
    {"Ethnicity/Race", "EthnicityRace"},
    {"Gender", "Gender"},
    {"Parenthood", "Parenthood"},
    {"Age", "Age"},
    {"Sexuality", "Sexuality"},
    {"Medical Information", "MedicalInformation"},
    {"Employment", "Employment"},
    {"Relationship", "Relationship"},
    {"Family", "Family"},
    {"Gender-Age", "GenderAge"},
    {"Mental Health", "MentalHealth"},
    {"Physical Appearance", "PhysicalAppearance"},
    {"Degree/Designation", "DegreeDesignation"},
}};

} // namespace

std::string_view to_string(PiiCategory c) noexcept { return kNames[index_of(c)].label; }

std::string_view identifier(PiiCategory c) noexcept { return kNames[index_of(c)].ident; }

std::optional<PiiCategory> parse_category(std::string_view name) noexcept {
    for (std::size_t i = 0; i < kCategoryCount; ++i)
        if (kNames[i].label == name || kNames[i].ident == name)
            return kAllCategories[i];
    return std::nullopt;
}

bool offset_less(const PiiSpan &a, const PiiSpan &b) noexcept {
    return std::tuple(a.start, a.end, index_of(a.category)) <
           std::tuple(b.start, b.end, index_of(b.category));
}

void AnnotatedPost::validate() const {
    const std::size_t len = utf8::length(text);
    for (const auto &s : spans) {
        if (s.start >= s.end)
            throw DataError("span [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                            ") has start >= end");
        if (s.end > len)
            throw DataError("span [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                            ") exceeds text length " + std::to_string(len));
    }
}

namespace {

std::size_t offset_value(const io::Json &v, const char *what) {
    if (!v.is_number_integer() || v.get<long long>() < 0)
        throw DataError(std::string(what) + " must be a non-negative integer");
    return v.get<std::size_t>();
}

PiiCategory category_value(const io::Json &v) {
    if (!v.is_string())
        throw DataError("category must be a string");
    const auto name = v.get<std::string>();
    const auto cat = parse_category(name);
    if (!cat)
        throw DataError("unknown category '" + name + "'");
    return *cat;
}

std::string id_value(const io::Json &row, std::size_t fallback) {
    const auto it = row.find("id");
    if (it == row.end() || it->is_null())
        return std::to_string(fallback);
    if (it->is_number_integer())
        return std::to_string(it->get<long long>());
    if (it->is_string())
        return it->get<std::string>();
    throw DataError("field 'id' must be a string or integer");
}

std::string text_value(const io::Json &row) {
    const auto it = row.find("text");
    if (it == row.end() || !it->is_string())
        throw DataError("missing string field 'text'");
    return it->get<std::string>();
}

} // namespace

AnnotatedPost from_doccano(const io::Json &row, std::size_t record) {
    if (!row.is_object())
        throw DataError("record is not a JSON object");
    AnnotatedPost post;
    post.id = id_value(row, record);
    post.text = text_value(row);
    if (const auto it = row.find("annotator"); it != row.end() && it->is_string())
        post.annotator = it->get<std::string>();
    const auto labels = row.find("label");
    if (labels != row.end() && !labels->is_null()) {
        if (!labels->is_array())
            throw DataError("field 'label' must be an array");
        for (const auto &entry : *labels) {
            if (!entry.is_array() || entry.size() != 3)
                throw DataError("label entries must be [start, end, category]");
            post.spans.push_back({offset_value(entry[0], "start"), offset_value(entry[1], "end"),
                                  category_value(entry[2])});
        }
    }
    post.validate();
    return post;
}

AnnotatedPost from_native(const io::Json &row) {
    if (!row.is_object())
        throw DataError("record is not a JSON object");
    AnnotatedPost post;
    const auto id = row.find("id");
    if (id == row.end() || !id->is_string() || id->get<std::string>().empty())
        throw DataError("missing non-empty string field 'id'");
    post.id = id->get<std::string>();
    post.text = text_value(row);
    if (const auto it = row.find("annotator"); it != row.end() && it->is_string())
        post.annotator = it->get<std::string>();
    if (const auto spans = row.find("spans"); spans != row.end()) {
        if (!spans->is_array())
            throw DataError("field 'spans' must be an array");
        for (const auto &s : *spans) {
            if (!s.is_object() || !s.contains("start") || !s.contains("end") ||
                !s.contains("category"))
                throw DataError("span objects need start, end and category");
            post.spans.push_back({offset_value(s["start"], "start"), offset_value(s["end"], "end"),
                                  category_value(s["category"])});
        }
    }
    post.validate();
    return post;
}

io::Json to_native_json(const AnnotatedPost &post) {
    io::Json spans = io::Json::array();
    for (const auto &s : post.spans)
        spans.push_back({{"start", s.start}, {"end", s.end}, {"category", to_string(s.category)}});
    return {{"id", post.id}, {"text", post.text}, {"spans", std::move(spans)},
            {"annotator", post.annotator}};
}

Corpus import_annotations(const std::filesystem::path &path, Schema schema) {
    Corpus corpus;
    std::size_t record = 0;
    io::for_each_line(path, [&](std::size_t line_no, std::string_view line) {
        ++record;
        try {
            const auto row = io::Json::parse(line);
            corpus.push_back(schema == Schema::Doccano ? from_doccano(row, record)
                                                       : from_native(row));
        } catch (const std::exception &e) {
            throw ParseError(path.string(), line_no, e.what());
        }
    });
    return corpus;
}

void export_native(const std::filesystem::path &path, std::span<const AnnotatedPost> corpus) {
    std::vector<io::Json> rows;
    rows.reserve(corpus.size());
    for (const auto &p : corpus)
        rows.push_back(to_native_json(p));
    io::write_jsonl(path, rows);
}

std::size_t intersection_length(const PiiSpan &a, const PiiSpan &b) noexcept {
    const auto lo = std::max(a.start, b.start);
    const auto hi = std::min(a.end, b.end);
    return hi > lo ? hi - lo : 0;
}

std::size_t union_length(const PiiSpan &a, const PiiSpan &b) noexcept {
    return a.length() + b.length() - intersection_length(a, b);
}

bool spans_match(const PiiSpan &a, const PiiSpan &b) noexcept {
    return a.category == b.category && intersection_length(a, b) > 0;
}

io::Json IaaReport::to_json() const {
    io::Json j{{"pairwise_f1", pairwise_f1}};
    j["mean_overlap_fraction"] =
        mean_overlap_fraction ? io::Json(*mean_overlap_fraction) : io::Json(nullptr);
    j["matched_pairs"] = matched_pairs;
    j["spans_a"] = spans_a;
    j["spans_b"] = spans_b;
    return j;
}

namespace {

std::vector<std::size_t> offset_order(std::span<const PiiSpan> spans) {
    std::vector<std::size_t> idx(spans.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
        idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t x, std::size_t y) { return offset_less(spans[x], spans[y]); });
    return idx;
}

} // namespace

std::vector<std::pair<std::size_t, std::size_t>> greedy_match(std::span<const PiiSpan> a,
                                                              std::span<const PiiSpan> b) {
    const auto order_a = offset_order(a);
    const auto order_b = offset_order(b);
    std::vector<bool> used(b.size(), false);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t ia : order_a) {
        for (std::size_t ib : order_b) {
            if (!used[ib] && spans_match(a[ia], b[ib])) {
                used[ib] = true;
                pairs.emplace_back(ia, ib);
                break;
            }
        }
    }
    return pairs;
}

IaaReport pairwise_f1(std::span<const AnnotatedPost> ann_a, std::span<const AnnotatedPost> ann_b) {
    std::unordered_map<std::string_view, const AnnotatedPost *> by_id;
    for (const auto &p : ann_b)
        if (!by_id.emplace(p.id, &p).second)
            throw DataError("duplicate post id '" + p.id + "' in second annotation set");
    if (ann_a.size() != ann_b.size())
        throw DataError("annotation sets cover different numbers of posts (" +
                        std::to_string(ann_a.size()) + " vs " + std::to_string(ann_b.size()) + ")");

    IaaReport report;
    double overlap_sum = 0.0;
    for (const auto &pa : ann_a) {
        const auto it = by_id.find(pa.id);
        if (it == by_id.end())
            throw DataError("post id '" + pa.id + "' missing from second annotation set");
        const AnnotatedPost &pb = *it->second;
        report.spans_a += pa.spans.size();
        report.spans_b += pb.spans.size();
        for (const auto &[ia, ib] : greedy_match(pa.spans, pb.spans)) {
            ++report.matched_pairs;
            const auto &sa = pa.spans[ia];
            const auto &sb = pb.spans[ib];
            overlap_sum += static_cast<double>(intersection_length(sa, sb)) /
                           static_cast<double>(union_length(sa, sb));
        }
    }
    const auto total = report.spans_a + report.spans_b;
    report.pairwise_f1 =
        total == 0 ? 1.0 : 2.0 * static_cast<double>(report.matched_pairs) / static_cast<double>(total);
    if (report.matched_pairs > 0)
        report.mean_overlap_fraction = overlap_sum / static_cast<double>(report.matched_pairs);
    return report;
}

std::array<CategoryStat, kCategoryCount> category_stats(std::span<const AnnotatedPost> corpus) {
    std::array<CategoryStat, kCategoryCount> stats{};
    std::array<double, kCategoryCount> length_sum{};
    for (const auto &post : corpus)
        for (const auto &s : post.spans) {
            ++stats[index_of(s.category)].span_count;
            length_sum[index_of(s.category)] += static_cast<double>(s.length());
        }
    for (std::size_t i = 0; i < kCategoryCount; ++i)
        if (stats[i].span_count > 0)
            stats[i].mean_span_length = length_sum[i] / static_cast<double>(stats[i].span_count);
    return stats;
}

std::map<PiiCategory, double> category_proportions(std::span<const AnnotatedPost> corpus) {
    std::map<PiiCategory, std::size_t> counts;
    std::size_t total = 0;
    for (const auto &post : corpus)
        for (const auto &s : post.spans) {
            ++counts[s.category];
            ++total;
        }
    if (total == 0)
        throw DataError("corpus contains no spans");
    std::map<PiiCategory, double> out;
    for (const auto &[cat, n] : counts)
        out[cat] = static_cast<double>(n) / static_cast<double>(total);
    return out;
}

} // namespace synthpii::annotation
