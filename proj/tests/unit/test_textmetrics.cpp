#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "synthpii/error.hpp"
#include "synthpii/textmetrics.hpp"

using namespace synthpii;
using namespace synthpii::textmetrics;

namespace {

oracle::Tokens random_tokens(std::mt19937_64 &rng, std::size_t max_len, int vocab) {
    std::uniform_int_distribution<std::size_t> len(0, max_len);
    std::uniform_int_distribution<int> word(0, vocab - 1);
    oracle::Tokens t(len(rng));
    for (auto &w : t)
        w = std::string(1, static_cast<char>('a' + word(rng)));
    return t;
}

} // namespace

TEST_CASE("tokenize lowercases and strips edge punctuation") {
    CHECK(tokenize("Hello, world!") == TokenSequence{"hello", "world"});
    CHECK(tokenize("").empty());
    CHECK(tokenize("don't") == TokenSequence{"don't"});
    CHECK(tokenize("  ...  \n\t ") == TokenSequence{});
    CHECK(tokenize("\xE2\x80\x9CQuoted\xE2\x80\x9D text") == TokenSequence{"quoted", "text"});
    CHECK(tokenize("a\xC2\xA0" "b") == TokenSequence{"a", "b"});
}

TEST_CASE("bleu worked examples") {
    CHECK(bleu("the cat sat", "the cat sat on the mat") == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(bleu("a b c d", "a b c d") == doctest::Approx(1.0));
    CHECK(bleu("hello", "hello") == doctest::Approx(1.0));
    CHECK(bleu("x y z", "a b c") == 0.0);
    CHECK(bleu("", "a b c") == 0.0);
    // No trigram overlap and no smoothing: zero.
    CHECK(bleu("a b x c d", "a b y c d") == 0.0);
}

TEST_CASE("bleu smoothing keeps zero-match orders from zeroing the score") {
    BleuOptions opts;
    opts.smoothing_epsilon = 0.1;
    const auto cand = tokenize("a b x c d");
    const auto ref = tokenize("a b y c d");
    const double s = bleu(cand, ref, opts);
    // p1 = 4/5, p2 = 2/4, p3 = 0.1/3; BP = 1.
    CHECK(s == doctest::Approx(std::cbrt(0.8 * 0.5 * (0.1 / 3.0))).epsilon(1e-12));
}

TEST_CASE("bleu clips repeated candidate n-grams") {
    // Unigram precision 2/7 in the classic "the the the" example; bigrams vanish.
    BleuOptions unigram;
    unigram.max_n = 1;
    const auto cand = tokenize("the the the the the the the");
    const auto ref = tokenize("the cat is on the mat");
    CHECK(bleu(cand, ref, unigram) == doctest::Approx(2.0 / 7.0));
}

TEST_CASE("rouge_l examples") {
    CHECK(rouge_l("a b c d", "a c d") == doctest::Approx(2 * 0.75 / 1.75));
    CHECK(rouge_l("same text here", "same text here") == doctest::Approx(1.0));
    CHECK(rouge_l("x y", "a b") == 0.0);
    CHECK(rouge_l("", "") == 0.0);
}

TEST_CASE("meteor examples") {
    CHECK(meteor("a b", "a b") == doctest::Approx(0.9375));
    CHECK(meteor("a x b", "a b") == doctest::Approx((10.0 * (2.0 / 3.0) / (1.0 + 6.0)) * 0.5));
    CHECK(meteor("a b", "c d") == 0.0);
    CHECK(meteor("", "a") == 0.0);
    const auto al = meteor_align(tokenize("a x b"), tokenize("a b"));
    CHECK(al.matches == 2);
    CHECK(al.chunks == 2);
}

TEST_CASE("meteor prefers the alignment with fewer chunks") {
    // Greedy leftmost alignment of "the" would cut the run "the cat sat" in two.
    const auto cand = tokenize("the cat sat on the mat");
    const auto ref = tokenize("on the mat the cat sat");
    const auto al = meteor_align(cand, ref);
    CHECK(al.matches == 6);
    CHECK(al.chunks == 2);
    CHECK(oracle::meteor_alignment(cand, ref).chunks == 2);
}

TEST_CASE("cosine_tf examples") {
    CHECK(cosine_tf("a b", "a c") == doctest::Approx(0.5));
    CHECK(cosine_tf("a b a", "a b a") == doctest::Approx(1.0));
    CHECK(cosine_tf("a", "b") == 0.0);
    CHECK(cosine_tf("", "b") == 0.0);
}

TEST_CASE("metrics agree with the reference implementations on random token sequences") {
    std::mt19937_64 rng(20240611);
    for (int trial = 0; trial < 400; ++trial) {
        const auto c = random_tokens(rng, 9, 5);
        const auto r = random_tokens(rng, 9, 5);
        CAPTURE(trial);
        CHECK(bleu(c, r) == doctest::Approx(oracle::bleu(c, r)).epsilon(1e-12));
        CHECK(lcs_length(c, r) == oracle::lcs(c, r));
        CHECK(rouge_l(c, r) == doctest::Approx(oracle::rouge_l(c, r)).epsilon(1e-12));
        CHECK(cosine_tf(c, r) == doctest::Approx(oracle::cosine(c, r)).epsilon(1e-12));
        const auto al = meteor_align(c, r);
        const auto ref_al = oracle::meteor_alignment(c, r);
        CHECK(al.matches == ref_al.matches);
        CHECK(al.chunks == ref_al.chunks);
        CHECK(meteor(c, r) == doctest::Approx(oracle::meteor(c, r)).epsilon(1e-12));
    }
}

TEST_CASE("meteor alignment pairs are a valid exact-match alignment") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const auto c = random_tokens(rng, 12, 4);
        const auto r = random_tokens(rng, 12, 4);
        const auto al = meteor_align(c, r);
        REQUIRE(al.pairs.size() == al.matches);
        std::vector<bool> used(r.size(), false);
        std::size_t chunks = 0;
        for (std::size_t k = 0; k < al.pairs.size(); ++k) {
            const auto [i, j] = al.pairs[k];
            CHECK(c[i] == r[j]);
            CHECK_FALSE(used[j]);
            used[j] = true;
            if (k > 0)
                CHECK(al.pairs[k - 1].first < i);
            if (k == 0 || al.pairs[k - 1].first + 1 != i || al.pairs[k - 1].second + 1 != j)
                ++chunks;
        }
        CHECK(chunks == al.chunks);
    }
}

TEST_CASE("meteor with an exhausted search budget still returns a maximal matching") {
    std::vector<std::string> c(30, "a"), r(30, "a");
    const auto al = meteor_align(c, r, 1);
    CHECK(al.matches == 30);
    CHECK(al.chunks >= 1);
}

TEST_CASE("scores stay inside [0, 1]") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 300; ++trial) {
        const auto c = random_tokens(rng, 10, 6);
        const auto r = random_tokens(rng, 10, 6);
        for (double v : {bleu(c, r), rouge_l(c, r), meteor(c, r), cosine_tf(c, r)}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("divergence and pair_report") {
    CHECK(divergence("my cat is called Tom", "my cat is called Tom") == doctest::Approx(0.0));
    CHECK(divergence("alpha beta gamma", "delta epsilon zeta") == 1.0);

    const auto same = pair_report("we moved to a new city", "we moved to a new city");
    CHECK(same.bleu3 == doctest::Approx(1.0));
    CHECK(same.rouge_l_f == doctest::Approx(1.0));
    CHECK(same.cosine == doctest::Approx(1.0));
    CHECK(same.meteor > 0.94);
    CHECK(same.meteor < 1.0);
    CHECK(same.divergence == 1.0 - same.bleu3);

    const auto r = pair_report("the cat sat", "the cat sat on the mat");
    CHECK(r.divergence == 1.0 - r.bleu3);
    const auto j = r.to_json("s1");
    CHECK(j["id"] == "s1");
    CHECK(j["divergence"].get<double>() == 1.0 - j["bleu3"].get<double>());
}

TEST_CASE("bert_score greedy matching") {
    const std::vector<Vector> same{{1, 0}, {0, 1}};
    const auto s = bert_score(same, same);
    CHECK(s.precision == doctest::Approx(1.0));
    CHECK(s.recall == doctest::Approx(1.0));
    CHECK(s.f1 == doctest::Approx(1.0));

    const std::vector<Vector> orth{{0, 0, 1}};
    const std::vector<Vector> refs{{1, 0, 0}, {0, 1, 0}};
    const auto o = bert_score(orth, refs);
    CHECK(o.precision == doctest::Approx(0.0));
    CHECK(o.f1 == doctest::Approx(0.0));

    CHECK_THROWS_AS(bert_score({}, refs), DataError);
    CHECK_THROWS_AS(bert_score(std::vector<Vector>{{1, 0}}, refs), DataError);
}

TEST_CASE("bert_score on a given cosine matrix") {
    // Orthonormal candidates and references chosen so cos(c_i, r_j) equals the
    // matrix entry: express references in the candidate basis.
    const std::vector<Vector> cand{{1, 0, 0, 0}, {0, 1, 0, 0}};
    auto ref_with = [](double a, double b) {
        return Vector{a, b, std::sqrt(1 - a * a - b * b), 0};
    };
    // Column j holds cos(c1, r_j), cos(c2, r_j): {0.9, 0.2} and {0.1, 0.8}.
    const std::vector<Vector> ref{ref_with(0.9, 0.2), ref_with(0.1, 0.8)};
    const auto s = bert_score(cand, ref);
    CHECK(s.precision == doctest::Approx(0.85));
    CHECK(s.recall == doctest::Approx(0.85));
    CHECK(s.f1 == doctest::Approx(0.85));
}

TEST_CASE("style_similarity") {
    const Vector a{1, 2, 3};
    CHECK(style_similarity(a, a) == doctest::Approx(1.0));
    CHECK(style_similarity(Vector{1, 0}, Vector{0, 1}) == doctest::Approx(0.0));
    CHECK(style_similarity(Vector{1, 0}, Vector{-1, 0}) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(style_similarity(Vector{0, 0}, Vector{1, 0}), DataError);
    CHECK_THROWS_AS(style_similarity(Vector{1, 0}, Vector{1, 0, 0}), DataError);
}

TEST_CASE("hash embedding provider is deterministic and unit-norm") {
    HashEmbeddingProvider p(16, 3);
    const auto v1 = p.token_vectors("Hello world hello");
    REQUIRE(v1.size() == 3);
    CHECK(v1[0] == v1[2]);
    double norm = 0;
    for (double x : v1[1])
        norm += x * x;
    CHECK(norm == doctest::Approx(1.0));
    HashEmbeddingProvider q(16, 3);
    CHECK(q.token_vectors("hello world") == std::vector<Vector>{v1[0], v1[1]});
    HashEmbeddingProvider other_seed(16, 4);
    CHECK(other_seed.token_vector("hello") != p.token_vector("hello"));
    const auto s = bert_score(p.token_vectors("a b c"), p.token_vectors("a b c"));
    CHECK(s.f1 == doctest::Approx(1.0));
    CHECK(stable_hash("") == 0xcbf29ce484222325ull);
    CHECK(stable_hash("a") == 0xaf63dc4c8601ec8cull);
}
