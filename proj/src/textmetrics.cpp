#include "synthpii/textmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <unordered_map>

#include "synthpii/error.hpp"
#include "synthpii/utf8.hpp"

namespace synthpii::textmetrics {

TokenSequence tokenize(std::string_view text) {
    TokenSequence out;
    std::u32string piece;
    auto flush = [&] {
        std::size_t b = 0;
        std::size_t e = piece.size();
        while (b < e && utf8::is_punct(piece[b]))
            ++b;
        while (e > b && utf8::is_punct(piece[e - 1]))
            --e;
        if (e > b)
            out.push_back(utf8::encode(std::u32string_view(piece).substr(b, e - b)));
        piece.clear();
    };
    for (char32_t cp : utf8::decode(text)) {
        if (utf8::is_space(cp))
            flush();
        else
            piece.push_back(utf8::to_lower(cp));
    }
    flush();
    return out;
}

namespace {

using NgramCounts = std::unordered_map<std::string, std::size_t>;

NgramCounts count_ngrams(std::span<const std::string> tokens, std::size_t n) {
    NgramCounts counts;
    if (tokens.size() < n)
        return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (std::size_t k = 1; k < n; ++k) {
            key += '\x1f';
            key += tokens[i + k];
        }
        ++counts[key];
    }
    return counts;
}

} // namespace

double bleu(std::span<const std::string> candidate, std::span<const std::string> reference,
            const BleuOptions &options) {
    if (options.max_n < 1)
        throw ConfigError("BLEU order must be at least 1");
    const std::size_t c = candidate.size();
    const std::size_t r = reference.size();
    if (c == 0)
        return 0.0;
    const std::size_t order = std::min<std::size_t>(static_cast<std::size_t>(options.max_n), c);

    double log_sum = 0.0;
    for (std::size_t n = 1; n <= order; ++n) {
        const auto cand_counts = count_ngrams(candidate, n);
        const auto ref_counts = count_ngrams(reference, n);
        std::size_t matched = 0;
        for (const auto &[gram, count] : cand_counts) {
            const auto it = ref_counts.find(gram);
            if (it != ref_counts.end())
                matched += std::min(count, it->second);
        }
        const double total = static_cast<double>(c - n + 1);
        double numerator = static_cast<double>(matched);
        if (matched == 0) {
            if (options.smoothing_epsilon <= 0.0)
                return 0.0;
            numerator = options.smoothing_epsilon;
        }
        log_sum += std::log(numerator / total);
    }
    const double bp = c > r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
    return bp * std::exp(log_sum / static_cast<double>(order));
}

double bleu(std::string_view candidate, std::string_view reference, const BleuOptions &options) {
    return bleu(tokenize(candidate), tokenize(reference), options);
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
    std::vector<std::size_t> prev(b.size() + 1, 0);
    std::vector<std::size_t> cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference) {
    if (candidate.empty() || reference.empty())
        return 0.0;
    const double lcs = static_cast<double>(lcs_length(candidate, reference));
    if (lcs == 0.0)
        return 0.0;
    const double p = lcs / static_cast<double>(candidate.size());
    const double r = lcs / static_cast<double>(reference.size());
    return 2.0 * p * r / (p + r);
}

double rouge_l(std::string_view candidate, std::string_view reference) {
    return rouge_l(tokenize(candidate), tokenize(reference));
}

namespace {

std::size_t count_chunks(const std::vector<std::pair<std::size_t, std::size_t>> &pairs) {
    std::size_t chunks = 0;
    for (std::size_t k = 0; k < pairs.size(); ++k)
        if (k == 0 || pairs[k].first != pairs[k - 1].first + 1 ||
            pairs[k].second != pairs[k - 1].second + 1)
            ++chunks;
    return chunks;
}

// Branch and bound over candidate positions, maximising the number of
// adjacent aligned pairs (chunks = matches - continuations) subject to
// reaching the maximum match count.
class AlignmentSearch {
  public:
    AlignmentSearch(std::vector<int> cand, std::vector<int> ref, std::size_t word_count,
                    std::size_t budget)
        : cand_(std::move(cand)), ref_(std::move(ref)), budget_(budget), need_(word_count, 0),
          remaining_cand_(word_count, 0), ref_positions_(word_count), used_(ref_.size(), false),
          choice_(cand_.size(), kNone) {
        std::vector<std::size_t> cand_count(word_count, 0);
        for (int w : cand_)
            ++cand_count[w];
        for (std::size_t j = 0; j < ref_.size(); ++j)
            ref_positions_[ref_[j]].push_back(j);
        for (std::size_t w = 0; w < word_count; ++w) {
            need_[w] = std::min(cand_count[w], ref_positions_[w].size());
            remaining_cand_[w] = cand_count[w];
            total_matches_ += need_[w];
        }
    }

    std::size_t total_matches() const { return total_matches_; }

    /// Leftmost greedy: extend the previous alignment when possible, otherwise
    /// take the leftmost unused reference occurrence.
    std::vector<std::size_t> greedy() const {
        std::vector<std::size_t> choice(cand_.size(), kNone);
        std::vector<bool> used(ref_.size(), false);
        std::vector<std::size_t> need = need_;
        std::vector<std::size_t> remaining = remaining_cand_;
        std::size_t prev = kNone;
        for (std::size_t i = 0; i < cand_.size(); ++i) {
            const int w = cand_[i];
            std::size_t pick = kNone;
            if (need[w] > 0) {
                if (prev != kNone && prev + 1 < ref_.size() && !used[prev + 1] &&
                    ref_[prev + 1] == w)
                    pick = prev + 1;
                else
                    for (std::size_t j : ref_positions_[w])
                        if (!used[j]) {
                            pick = j;
                            break;
                        }
            }
            --remaining[w];
            if (pick != kNone) {
                used[pick] = true;
                --need[w];
            }
            choice[i] = pick;
            prev = pick;
        }
        return choice;
    }

    std::vector<std::size_t> solve() {
        best_ = greedy();
        best_continuations_ = continuations(best_);
        if (total_matches_ > 0 && best_continuations_ + 1 < total_matches_)
            descend(0, kNone, 0, 0);
        return best_;
    }

  private:
    static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

    static std::size_t continuations(const std::vector<std::size_t> &choice) {
        std::size_t n = 0;
        for (std::size_t i = 1; i < choice.size(); ++i)
            if (choice[i] != kNone && choice[i - 1] != kNone && choice[i] == choice[i - 1] + 1)
                ++n;
        return n;
    }

    void descend(std::size_t i, std::size_t prev, std::size_t matched, std::size_t cont) {
        if (nodes_++ >= budget_)
            return;
        if (matched == total_matches_) {
            if (cont > best_continuations_) {
                best_continuations_ = cont;
                best_ = choice_;
                std::fill(best_.begin() + static_cast<std::ptrdiff_t>(i), best_.end(), kNone);
            }
            return;
        }
        if (i == cand_.size())
            return;
        // Every further match can add at most one continuation.
        if (cont + (total_matches_ - matched) <= best_continuations_)
            return;

        const int w = cand_[i];
        const bool may_skip = remaining_cand_[w] - 1 >= need_[w];
        --remaining_cand_[w];
        if (need_[w] > 0) {
            auto try_pick = [&](std::size_t j) {
                used_[j] = true;
                --need_[w];
                choice_[i] = j;
                const bool extends = prev != kNone && j == prev + 1;
                descend(i + 1, j, matched + 1, cont + (extends ? 1 : 0));
                choice_[i] = kNone;
                ++need_[w];
                used_[j] = false;
            };
            if (prev != kNone && prev + 1 < ref_.size() && !used_[prev + 1] && ref_[prev + 1] == w)
                try_pick(prev + 1);
            for (std::size_t j : ref_positions_[w])
                if (!used_[j] && !(prev != kNone && j == prev + 1))
                    try_pick(j);
        }
        if (may_skip)
            descend(i + 1, kNone, matched, cont);
        ++remaining_cand_[w];
    }

    std::vector<int> cand_;
    std::vector<int> ref_;
    std::size_t budget_;
    std::size_t nodes_ = 0;
    std::size_t total_matches_ = 0;
    std::vector<std::size_t> need_;
    std::vector<std::size_t> remaining_cand_;
    std::vector<std::vector<std::size_t>> ref_positions_;
    std::vector<bool> used_;
    std::vector<std::size_t> choice_;
    std::vector<std::size_t> best_;
    std::size_t best_continuations_ = 0;
};

} // namespace

MeteorAlignment meteor_align(std::span<const std::string> candidate,
                             std::span<const std::string> reference, std::size_t node_budget) {
    std::unordered_map<std::string_view, int> ids;
    auto id_of = [&](std::string_view w) {
        return ids.emplace(w, static_cast<int>(ids.size())).first->second;
    };
    std::vector<int> cand;
    std::vector<int> ref;
    cand.reserve(candidate.size());
    ref.reserve(reference.size());
    for (const auto &t : candidate)
        cand.push_back(id_of(t));
    for (const auto &t : reference)
        ref.push_back(id_of(t));

    AlignmentSearch search(std::move(cand), std::move(ref), ids.size(), node_budget);
    const auto choice = search.solve();

    MeteorAlignment out;
    for (std::size_t i = 0; i < choice.size(); ++i)
        if (choice[i] != static_cast<std::size_t>(-1))
            out.pairs.emplace_back(i, choice[i]);
    out.matches = out.pairs.size();
    out.chunks = count_chunks(out.pairs);
    return out;
}

double meteor(std::span<const std::string> candidate, std::span<const std::string> reference) {
    if (candidate.empty() || reference.empty())
        return 0.0;
    const auto align = meteor_align(candidate, reference);
    if (align.matches == 0)
        return 0.0;
    const double m = static_cast<double>(align.matches);
    const double p = m / static_cast<double>(candidate.size());
    const double r = m / static_cast<double>(reference.size());
    const double fmean = 10.0 * p * r / (r + 9.0 * p);
    const double frag = static_cast<double>(align.chunks) / m;
    const double penalty = 0.5 * frag * frag * frag;
    return fmean * (1.0 - penalty);
}

double meteor(std::string_view candidate, std::string_view reference) {
    return meteor(tokenize(candidate), tokenize(reference));
}

double cosine_tf(std::span<const std::string> candidate, std::span<const std::string> reference) {
    if (candidate.empty() || reference.empty())
        return 0.0;
    std::unordered_map<std::string_view, std::pair<double, double>> tf;
    for (const auto &t : candidate)
        tf[t].first += 1.0;
    for (const auto &t : reference)
        tf[t].second += 1.0;
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto &[_, v] : tf) {
        dot += v.first * v.second;
        na += v.first * v.first;
        nb += v.second * v.second;
    }
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

double cosine_tf(std::string_view candidate, std::string_view reference) {
    return cosine_tf(tokenize(candidate), tokenize(reference));
}

double divergence(std::string_view source, std::string_view synthetic) {
    return 1.0 - bleu(synthetic, source);
}

io::Json SimilarityReport::to_json(std::string_view id) const {
    return {{"id", id},         {"bleu3", bleu3},   {"rouge_l", rouge_l_f},
            {"meteor", meteor}, {"cosine", cosine}, {"divergence", divergence}};
}

SimilarityReport pair_report(std::span<const std::string> candidate,
                             std::span<const std::string> reference) {
    SimilarityReport r;
    r.bleu3 = bleu(candidate, reference);
    r.rouge_l_f = rouge_l(candidate, reference);
    r.meteor = meteor(candidate, reference);
    r.cosine = cosine_tf(candidate, reference);
    r.divergence = 1.0 - r.bleu3;
    return r;
}

SimilarityReport pair_report(std::string_view candidate, std::string_view reference) {
    return pair_report(tokenize(candidate), tokenize(reference));
}

namespace {

double norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v)
        s += x * x;
    return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

} // namespace

BertScore bert_score(std::span<const Vector> candidate, std::span<const Vector> reference) {
    if (candidate.empty() || reference.empty())
        throw DataError("bert_score needs at least one vector on each side");
    const std::size_t dim = candidate.front().size();
    std::vector<double> cand_norm, ref_norm;
    for (const auto &v : candidate) {
        if (v.size() != dim)
            throw DataError("bert_score: dimension mismatch");
        cand_norm.push_back(norm(v));
    }
    for (const auto &v : reference) {
        if (v.size() != dim)
            throw DataError("bert_score: dimension mismatch");
        ref_norm.push_back(norm(v));
    }

    // sim[i][j] = cos(candidate i, reference j); zero vectors have cosine 0.
    std::vector<double> best_row(candidate.size(), -1.0);
    std::vector<double> best_col(reference.size(), -1.0);
    for (std::size_t i = 0; i < candidate.size(); ++i)
        for (std::size_t j = 0; j < reference.size(); ++j) {
            const double denom = cand_norm[i] * ref_norm[j];
            const double sim = denom > 0.0 ? dot(candidate[i], reference[j]) / denom : 0.0;
            best_row[i] = std::max(best_row[i], sim);
            best_col[j] = std::max(best_col[j], sim);
        }
    BertScore s;
    for (double x : best_row)
        s.precision += x;
    for (double x : best_col)
        s.recall += x;
    s.precision /= static_cast<double>(candidate.size());
    s.recall /= static_cast<double>(reference.size());
    s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
                                        : 0.0;
    return s;
}

double style_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw DataError("style_similarity: dimension mismatch");
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0)
        throw DataError("style_similarity: zero-norm vector");
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

std::uint64_t stable_hash(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

HashEmbeddingProvider::HashEmbeddingProvider(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
    if (dimension == 0)
        throw ConfigError("embedding dimension must be positive");
}

Vector HashEmbeddingProvider::token_vector(std::string_view token) const {
    std::mt19937_64 engine(stable_hash(token) ^ seed_);
    Vector v(dimension_);
    for (double &x : v)
        x = static_cast<double>(engine() >> 11) * 0x1.0p-52 - 1.0;
    const double n = norm(v);
    if (n > 0.0)
        for (double &x : v)
            x /= n;
    return v;
}

std::vector<Vector> HashEmbeddingProvider::token_vectors(std::string_view text) {
    std::vector<Vector> out;
    for (const auto &t : tokenize(text))
        out.push_back(token_vector(t));
    return out;
}

Vector HashEmbeddingProvider::pooled_vector(std::string_view text) {
    Vector pooled(dimension_, 0.0);
    const auto tokens = token_vectors(text);
    for (const auto &v : tokens)
        for (std::size_t i = 0; i < dimension_; ++i)
            pooled[i] += v[i];
    if (!tokens.empty())
        for (double &x : pooled)
            x /= static_cast<double>(tokens.size());
    return pooled;
}

} // namespace synthpii::textmetrics
