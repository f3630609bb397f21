#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "synthpii/annotation.hpp"
#include "synthpii/jsonl.hpp"

namespace synthpii::mleval {

using annotation::kCategoryCount;
using annotation::PiiCategory;
using annotation::PiiSpan;

using LabelSet = std::bitset<kCategoryCount>;

LabelSet label_set(std::span<const PiiCategory> categories);
std::vector<std::string> label_names(const LabelSet &labels);

struct MultilabelExample {
    std::string id;
    LabelSet gold;
    LabelSet pred;
};

/// `{id, gold: [...], pred: [...]}` per line.
std::vector<MultilabelExample> load_multilabel(const std::filesystem::path &path);

enum class Averaging { Micro, Macro, Samples };

struct MultilabelMetrics {
    double subset_accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    Averaging averaging = Averaging::Micro;

    io::Json to_json() const;
};

/// Subset accuracy plus P/R/F1. Micro pools label instances over categories;
/// macro averages per-category scores over categories with a gold positive;
/// samples averages per-example scores (an example with empty gold and pred
/// scores 1). Throws DataError on empty input.
MultilabelMetrics multilabel_metrics(std::span<const MultilabelExample> examples,
                                     Averaging averaging = Averaging::Micro);

struct TokenPrediction {
    std::string id;
    std::vector<std::string> tokens;
    std::vector<LabelSet> gold;
    std::vector<LabelSet> pred;
};

/// `{id, tokens: [...], gold: [[...], ...], pred: [[...], ...]}` per line.
std::vector<TokenPrediction> load_token_predictions(const std::filesystem::path &path);

struct TokenMacroF1 {
    double macro_f1 = 0.0;
    /// Per-category F1 for categories with at least one gold-positive token.
    std::vector<std::pair<PiiCategory, double>> per_category;

    io::Json to_json() const;
};

/// Token-level F1 per category, macro-averaged over categories with at least one
/// gold-positive token. Throws DataError on length mismatch or when no gold
/// positive exists at all.
TokenMacroF1 token_macro_f1(std::span<const TokenPrediction> predictions);

struct SpanF1 {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t true_positives = 0;
    std::size_t predicted = 0;
    std::size_t gold = 0;

    io::Json to_json() const;
};

/// Coverage of a gold span by a predicted span: |intersection| / |gold|.
double gold_coverage(const PiiSpan &gold, const PiiSpan &pred) noexcept;

/// Denominator of the overlap fraction: the gold span's length, or the union
/// of both spans (character Jaccard).
enum class OverlapBasis { Gold, Union };
double overlap_fraction(const PiiSpan &gold, const PiiSpan &pred, OverlapBasis basis) noexcept;

/// Predicted spans in offset order each take the first unmatched gold span (offset
/// order) of the same category that it intersects with an overlap fraction of at
/// least `min_overlap`.
std::size_t partial_span_matches(std::span<const PiiSpan> gold, std::span<const PiiSpan> pred,
                                 double min_overlap, OverlapBasis basis = OverlapBasis::Gold);

/// Partial-overlap span P/R/F1 for one document. With no spans on either side
/// all three scores are 1.
SpanF1 span_f1_partial(std::span<const PiiSpan> gold, std::span<const PiiSpan> pred,
                       double min_overlap = 0.5, OverlapBasis basis = OverlapBasis::Gold);

/// Corpus-level version: pooled counts over documents matched by id. Throws
/// DataError when the two corpora cover different ids.
SpanF1 span_f1_partial(std::span<const annotation::AnnotatedPost> gold,
                       std::span<const annotation::AnnotatedPost> pred, double min_overlap = 0.5,
                       OverlapBasis basis = OverlapBasis::Gold);

struct CategoryProportion {
    PiiCategory category;
    double original = 0.0;
    double synthetic = 0.0;
    double residual = 0.0; ///< synthetic - original
};

struct ProportionComparison {
    std::vector<CategoryProportion> rows; ///< all categories, taxonomy order
    double max_abs_deviation = 0.0;

    /// `category,original,synthetic,residual`
    std::string to_csv() const;
    io::Json to_json() const;
};

ProportionComparison proportion_comparison(std::span<const annotation::AnnotatedPost> original,
                                           std::span<const annotation::AnnotatedPost> synthetic);

} // namespace synthpii::mleval
