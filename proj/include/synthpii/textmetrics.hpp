#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "synthpii/jsonl.hpp"

namespace synthpii::textmetrics {

/// Lowercase tokens from the canonical tokenizer.
using TokenSequence = std::vector<std::string>;
using Vector = std::vector<double>;

/// Lowercases, splits on Unicode whitespace, strips leading and trailing
/// punctuation from each piece and drops pieces that end up empty.
TokenSequence tokenize(std::string_view text);

struct BleuOptions {
    int max_n = 3;
    /// Added to the matched count of any order with zero matches. 0 disables smoothing.
    double smoothing_epsilon = 0.0;
};

/// Sentence BLEU of `candidate` against a single `reference`.
///
/// Geometric mean of clipped n-gram precisions for n = 1..N times the brevity
/// penalty min(1, exp(1 - r/c)). N is max_n, capped at the candidate length so
/// that short candidates are scored on the orders they actually have. An empty
/// candidate scores 0; without smoothing any zero precision makes the score 0.
double bleu(std::span<const std::string> candidate, std::span<const std::string> reference,
            const BleuOptions &options = {});
double bleu(std::string_view candidate, std::string_view reference, const BleuOptions &options = {});

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

/// ROUGE-L F-measure (balanced).
double rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference);
double rouge_l(std::string_view candidate, std::string_view reference);

struct MeteorAlignment {
    std::size_t matches = 0;
    std::size_t chunks = 0;
    /// (candidate index, reference index), ascending by candidate index.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

/// Exact-match unigram alignment with the maximum number of matches and, among
/// those, as few chunks as the search finds. The search starts from a leftmost
/// greedy alignment and improves it by branch and bound; it is exhaustive
/// unless `node_budget` is exhausted, in which case the best alignment found so
/// far is returned.
MeteorAlignment meteor_align(std::span<const std::string> candidate,
                             std::span<const std::string> reference,
                             std::size_t node_budget = 200000);

/// Exact-match METEOR: Fmean = 10PR/(R+9P), penalty = 0.5 (chunks/m)^3.
double meteor(std::span<const std::string> candidate, std::span<const std::string> reference);
double meteor(std::string_view candidate, std::string_view reference);

/// Cosine of term-frequency vectors; 0 when either side is empty.
double cosine_tf(std::span<const std::string> candidate, std::span<const std::string> reference);
double cosine_tf(std::string_view candidate, std::string_view reference);

/// 1 - BLEU-3(synthetic, source).
double divergence(std::string_view source, std::string_view synthetic);

struct SimilarityReport {
    double bleu3 = 0.0;
    double rouge_l_f = 0.0;
    double meteor = 0.0;
    double cosine = 0.0;
    double divergence = 1.0;

    io::Json to_json(std::string_view id) const;
};

SimilarityReport pair_report(std::string_view candidate, std::string_view reference);
SimilarityReport pair_report(std::span<const std::string> candidate,
                             std::span<const std::string> reference);

struct BertScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Greedy max-cosine matching, no idf weighting and no baseline rescaling.
/// Throws DataError on an empty side or mismatched dimensions.
BertScore bert_score(std::span<const Vector> candidate, std::span<const Vector> reference);

/// Cosine of two pooled vectors. Throws DataError on zero norm or dimension mismatch.
double style_similarity(std::span<const double> a, std::span<const double> b);

/// Source of contextual token vectors and pooled document vectors.
class EmbeddingProvider {
  public:
    virtual ~EmbeddingProvider() = default;

    virtual std::size_t dimension() const = 0;
    virtual std::vector<Vector> token_vectors(std::string_view text) = 0;
    virtual Vector pooled_vector(std::string_view text) = 0;
};

/// Deterministic provider for tests: each token maps to a pseudo-random unit
/// vector seeded from a stable hash of the token, the pooled vector is the
/// mean of the token vectors. Identical tokens give identical vectors.
class HashEmbeddingProvider final : public EmbeddingProvider {
  public:
    explicit HashEmbeddingProvider(std::size_t dimension = 64, std::uint64_t seed = 0);

    std::size_t dimension() const override { return dimension_; }
    std::vector<Vector> token_vectors(std::string_view text) override;
    Vector pooled_vector(std::string_view text) override;

    Vector token_vector(std::string_view token) const;

  private:
    std::size_t dimension_;
    std::uint64_t seed_;
};

/// FNV-1a, 64 bit.
std::uint64_t stable_hash(std::string_view bytes) noexcept;

} // namespace synthpii::textmetrics
