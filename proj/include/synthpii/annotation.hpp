#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "synthpii/jsonl.hpp"

namespace synthpii::annotation {

/// The closed PII taxonomy.
enum class PiiCategory {
    Name,
    Birthdate,
    Location,
    Country,
    MaritalStatus,
    Religion,
    EthnicityRace,
    Gender,
    Parenthood,
    Age,
    Sexuality,
    MedicalInformation,
    Employment,
    Relationship,
    Family,
    GenderAge,
    MentalHealth,
    PhysicalAppearance,
    DegreeDesignation,
};

inline constexpr std::size_t kCategoryCount = 19;

inline constexpr std::array<PiiCategory, kCategoryCount> kAllCategories{
    PiiCategory::Name,          PiiCategory::Birthdate,          PiiCategory::Location,
    PiiCategory::Country,       PiiCategory::MaritalStatus,      PiiCategory::Religion,
    PiiCategory::EthnicityRace, PiiCategory::Gender,             PiiCategory::Parenthood,
    PiiCategory::Age,           PiiCategory::Sexuality,          PiiCategory::MedicalInformation,
    PiiCategory::Employment,    PiiCategory::Relationship,       PiiCategory::Family,
    PiiCategory::GenderAge,     PiiCategory::MentalHealth,       PiiCategory::PhysicalAppearance,
    PiiCategory::DegreeDesignation,
};

constexpr std::size_t index_of(PiiCategory c) noexcept { return static_cast<std::size_t>(c); }

/// Stable serialised label, e.g. "Marital Status", "Gender-Age".
std::string_view to_string(PiiCategory c) noexcept;
/// Identifier-style name, e.g. "MaritalStatus".
std::string_view identifier(PiiCategory c) noexcept;
/// Accepts either the serialised label or the identifier-style name.
std::optional<PiiCategory> parse_category(std::string_view name) noexcept;

/// Half-open interval [start, end) in Unicode scalar offsets.
struct PiiSpan {
    std::size_t start = 0;
    std::size_t end = 0;
    PiiCategory category = PiiCategory::Name;

    std::size_t length() const noexcept { return end - start; }

    friend bool operator==(const PiiSpan &, const PiiSpan &) = default;
};

/// Offset order: start, then end, then category.
bool offset_less(const PiiSpan &a, const PiiSpan &b) noexcept;

struct AnnotatedPost {
    std::string id;
    std::string text;
    std::vector<PiiSpan> spans;
    std::string annotator;

    /// Throws DataError if any span is empty or out of bounds.
    void validate() const;

    friend bool operator==(const AnnotatedPost &, const AnnotatedPost &) = default;
};

using Corpus = std::vector<AnnotatedPost>;

enum class Schema { Doccano, Native };

/// Doccano: `{text, label: [[start, end, category], ...]}` with optional `id`
/// and `annotator`. Native: `{id, text, spans: [{start, end, category}], annotator}`.
Corpus import_annotations(const std::filesystem::path &path, Schema schema);

AnnotatedPost from_doccano(const io::Json &row, std::size_t record);
AnnotatedPost from_native(const io::Json &row);
io::Json to_native_json(const AnnotatedPost &post);
void export_native(const std::filesystem::path &path, std::span<const AnnotatedPost> corpus);

std::size_t intersection_length(const PiiSpan &a, const PiiSpan &b) noexcept;
std::size_t union_length(const PiiSpan &a, const PiiSpan &b) noexcept;

/// Same category and intersecting half-open intervals.
bool spans_match(const PiiSpan &a, const PiiSpan &b) noexcept;

struct IaaReport {
    double pairwise_f1 = 0.0;
    /// Mean character Jaccard over matched pairs; empty when nothing matched.
    std::optional<double> mean_overlap_fraction;
    std::size_t matched_pairs = 0;
    std::size_t spans_a = 0;
    std::size_t spans_b = 0;

    io::Json to_json() const;
};

/// Indices of matched (a, b) pairs under greedy one-to-one matching: a's spans
/// in offset order each take the first unmatched b span (offset order) that
/// satisfies spans_match.
std::vector<std::pair<std::size_t, std::size_t>> greedy_match(std::span<const PiiSpan> a,
                                                              std::span<const PiiSpan> b);

/// Inter-annotator agreement over two annotation sets covering the same post ids.
/// F1 is 1.0 when neither annotator marked any span.
IaaReport pairwise_f1(std::span<const AnnotatedPost> ann_a, std::span<const AnnotatedPost> ann_b);

struct CategoryStat {
    std::size_t span_count = 0;
    std::optional<double> mean_span_length;
};

std::array<CategoryStat, kCategoryCount> category_stats(std::span<const AnnotatedPost> corpus);

/// Share of all spans per category. Throws DataError when the corpus has no spans.
std::map<PiiCategory, double> category_proportions(std::span<const AnnotatedPost> corpus);

} // namespace synthpii::annotation
