#include <cmath>
#include <functional>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "sema/semantic_metrics.hpp"
#include "sema/text.hpp"
#include "oracles.hpp"

using namespace sema;

namespace {

TokenSequence toks(const char* s) { return tokenize(s); }

TokenSequence random_tokens(std::mt19937_64& rng, std::size_t max_len, int vocab = 5) {
    std::uniform_int_distribution<std::size_t> len(1, max_len);
    std::uniform_int_distribution<int> word(0, vocab - 1);
    TokenSequence out(len(rng));
    for (auto& t : out) t = std::string(1, static_cast<char>('a' + word(rng)));
    return out;
}

/// Sentence BLEU with clipped counts over string-joined n-grams.
double oracle_bleu_dir(const TokenSequence& c, const TokenSequence& r) {
    if (c.empty()) return 0.0;
    auto grams = [](const TokenSequence& t, std::size_t n) {
        std::map<std::string, int> m;
        for (std::size_t i = 0; i + n <= t.size(); ++i) {
            std::string k;
            for (std::size_t j = i; j < i + n; ++j) k += t[j] + "\x01";
            ++m[k];
        }
        return m;
    };
    double logp = 0;
    for (std::size_t n = 1; n <= 4; ++n) {
        auto cg = grams(c, n), rg = grams(r, n);
        int match = 0, total = 0;
        for (auto& [k, v] : cg) {
            total += v;
            match += std::min(v, rg[k]);
        }
        if (n == 1 && match == 0) return 0.0;
        logp += std::log(n == 1 ? double(match) / total : double(match + 1) / (total + 1));
    }
    double bp = c.size() < r.size() ? std::exp(1.0 - double(r.size()) / double(c.size())) : 1.0;
    return bp * std::exp(logp / 4);
}

}  // namespace

TEST(Tokenize, LowercasesAndStripsPunctuation) {
    EXPECT_EQ(tokenize("The Cat, sat -- on \"the\" mat!"),
              (TokenSequence{"the", "cat", "sat", "on", "the", "mat"}));
    EXPECT_EQ(tokenize("  \t\n "), TokenSequence{});
    EXPECT_EQ(tokenize("don't (stop)"), (TokenSequence{"don't", "stop"}));
    EXPECT_EQ(tokenize("Caf\xC3\x89 \xE2\x80\x9Cquoted\xE2\x80\x9D"), (TokenSequence{"caf\xC3\xA9", "quoted"}));
    EXPECT_EQ(tokenize("a\xC2\xA0" "b"), (TokenSequence{"a", "b"}));  // no-break space
}

TEST(Tokenize, IdempotentOnJoinedOutput) {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> byte(0, 255);
    for (int trial = 0; trial < 300; ++trial) {
        std::string s;
        for (int i = 0; i < 40; ++i) s.push_back(static_cast<char>(byte(rng)));
        const auto once = tokenize(s);
        EXPECT_EQ(tokenize(join(once)), once);
    }
}

TEST(RougeL, MatchesBruteForceOracle) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 300; ++trial) {
        const auto a = random_tokens(rng, 8);
        const auto b = random_tokens(rng, 8);
        EXPECT_EQ(lcs_length(a, b), oracle::lcs(a, b));
        EXPECT_NEAR(rouge_l(a, b), oracle::rouge_l(a, b), 1e-12);
    }
}

TEST(RougeL, KnownValues) {
    EXPECT_DOUBLE_EQ(rouge_l(toks("a b c d"), toks("a b c d")), 1.0);
    EXPECT_DOUBLE_EQ(rouge_l(toks("a b"), toks("c d")), 0.0);
    EXPECT_DOUBLE_EQ(rouge_l(toks("a b c d"), toks("a c")), 2.0 * 1.0 * 0.5 / 1.5);
    EXPECT_DOUBLE_EQ(rouge_l({}, toks("a")), 0.0);
}

TEST(Bleu, WorkedExample) {
    // unigram 5/6, bigram (3+1)/(5+1), trigram (1+1)/(4+1), 4-gram (0+1)/(3+1), equal lengths
    const double expected = std::pow(5.0 / 6 * 4.0 / 6 * 2.0 / 5 * 1.0 / 4, 0.25);
    const auto a = toks("the cat sat on the mat");
    const auto b = toks("the cat is on the mat");
    EXPECT_NEAR(bleu_4_directional(a, b), expected, 1e-12);
    EXPECT_NEAR(bleu_4(a, b), expected, 1e-12);
    EXPECT_NEAR(expected, 0.4854917717, 1e-9);
}

TEST(Bleu, BrevityPenaltyAndEdgeCases) {
    const auto shortc = toks("the red boat");
    const auto longr = toks("a red boat near the harbor");
    // unigram 3/3, bigram 2/3, trigram 1/2, 4-gram 1/1, BP exp(1 - 6/3)
    const double expected = std::exp(1.0 - 2.0) * std::pow(1.0 * 2.0 / 3 * 0.5 * 1.0, 0.25);
    EXPECT_NEAR(bleu_4_directional(shortc, longr), expected, 1e-12);
    EXPECT_EQ(bleu_4_directional({}, longr), 0.0);
    EXPECT_EQ(bleu_4_directional(toks("x y"), toks("a b")), 0.0);
    EXPECT_DOUBLE_EQ(bleu_4(toks("one"), toks("one")), 1.0);
}

TEST(Bleu, MatchesOracleOnRandomTexts) {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 300; ++trial) {
        const auto a = random_tokens(rng, 10, 4);
        const auto b = random_tokens(rng, 10, 4);
        EXPECT_NEAR(bleu_4_directional(a, b), oracle_bleu_dir(a, b), 1e-12);
        EXPECT_NEAR(bleu_4(a, b), 0.5 * (oracle_bleu_dir(a, b) + oracle_bleu_dir(b, a)), 1e-12);
    }
}

TEST(Bm25, ClosedFormSingleTerm) {
    // N = 3, df(x) = 2, |d| = 6, avgdl = 5
    const std::vector<TokenSequence> docs{toks("x a b c d e"), toks("x f g h i"), toks("j k l m")};
    const Bm25Corpus corpus(docs);
    EXPECT_EQ(corpus.size(), 3u);
    EXPECT_DOUBLE_EQ(corpus.average_length(), 5.0);
    EXPECT_NEAR(corpus.idf("x"), std::log(1.6), 1e-15);
    EXPECT_NEAR(corpus.score(toks("x"), docs[0]), std::log(1.6) * 2.5 / 2.725, 1e-12);
    EXPECT_EQ(corpus.score(toks("zzz"), docs[0]), 0.0);
    EXPECT_EQ(corpus.document_frequency("x"), 2u);
}

TEST(Bm25, RepeatedQueryTermsCountEachTime) {
    const std::vector<TokenSequence> docs{toks("x y"), toks("z w")};
    const Bm25Corpus corpus(docs);
    EXPECT_NEAR(corpus.score(toks("x x"), docs[0]), 2.0 * corpus.score(toks("x"), docs[0]), 1e-12);
}

TEST(Bm25, SelfScoreIsMaximalAmongEqualLengthDocuments) {
    std::mt19937_64 rng(17);
    std::vector<std::string> vocab;
    for (char c = 'a'; c <= 'l'; ++c) vocab.emplace_back(1, c);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<TokenSequence> docs;
        for (int d = 0; d < 6; ++d) {
            auto v = vocab;
            std::shuffle(v.begin(), v.end(), rng);
            docs.emplace_back(v.begin(), v.begin() + 5);
        }
        const Bm25Corpus corpus(docs);
        for (const auto& q : docs) {
            const double self = corpus.score(q, q);
            for (const auto& d : docs) EXPECT_LE(corpus.score(q, d), self + 1e-12);
        }
    }
}

TEST(Bm25, SelfScoreCanLoseWhenTokensRepeat) {
    // idf(y) is small, so matching x twice beats matching x and y once each.
    const std::vector<TokenSequence> docs{toks("x y"), toks("x x"), toks("y z"), toks("y w"), toks("y v"), toks("y u")};
    const Bm25Corpus corpus(docs);
    EXPECT_GT(corpus.score(docs[0], docs[1]), corpus.score(docs[0], docs[0]));
}

TEST(Bm25, EmptyCorpusAndNormalization) {
    EXPECT_THROW(Bm25Corpus({}), ContractError);
    std::vector<SemanticScoreSet> s(3);
    s[0].bm25_raw = 2.0;
    s[1].bm25_raw = 4.0;
    s[2].bm25_raw = 3.0;
    normalize_bm25(s);
    EXPECT_EQ(*s[0].bm25_norm, 0.0);
    EXPECT_EQ(*s[1].bm25_norm, 1.0);
    EXPECT_EQ(*s[2].bm25_norm, 0.5);
    const std::vector<double> flat{3.0, 3.0};
    EXPECT_EQ(min_max_scale(flat), (std::vector<double>{1.0, 1.0}));
}

TEST(Embedding, StubIsExactTokenMatch) {
    OrthogonalStubBackend stub;
    const auto a = toks("red boat near harbor");
    const auto b = toks("red boat far away");
    const auto s = embed_score(a, b, stub);
    EXPECT_DOUBLE_EQ(s.precision, 0.5);
    EXPECT_DOUBLE_EQ(s.recall, 0.5);
    EXPECT_DOUBLE_EQ(s.f1, 0.5);
    const auto self = embed_score(a, a, stub);
    EXPECT_EQ(self.f1, 1.0);
    const auto asym = embed_score(toks("red"), toks("red boat"), stub);
    EXPECT_DOUBLE_EQ(asym.recall, 1.0);
    EXPECT_DOUBLE_EQ(asym.precision, 0.5);
    EXPECT_THROW(embed_score(TokenSequence{}, a, stub), ContractError);
}

TEST(Embedding, DenseVectorsGreedyMatching) {
    const double v1[] = {1, 0, 0}, v2[] = {0, 1, 0}, v3[] = {1, 1, 0}, v4[] = {-1, 0, 0};
    std::vector<TokenVector> a{TokenVector::from_dense(v1), TokenVector::from_dense(v2)};
    std::vector<TokenVector> b{TokenVector::from_dense(v3)};
    const auto s = embed_score(a, b);
    const double c = 1.0 / std::sqrt(2.0);
    EXPECT_NEAR(s.recall, c, 1e-12);
    EXPECT_NEAR(s.precision, c, 1e-12);
    const auto neg = embed_score({TokenVector::from_dense(v1)}, {TokenVector::from_dense(v4)});
    EXPECT_EQ(neg.precision, 0.0);
    EXPECT_EQ(neg.f1, 0.0);
}

TEST(Embedding, IdfWeightsAndBaseline) {
    const std::vector<TokenSequence> docs{toks("red boat"), toks("red car"), toks("red sky")};
    const IdfTable idf(docs);
    EXPECT_EQ(idf("red"), 0.0);
    EXPECT_DOUBLE_EQ(idf("boat"), std::log(2.0));
    EXPECT_DOUBLE_EQ(idf("unseen"), std::log(4.0));

    OrthogonalStubBackend stub;
    const auto a = toks("red boat"), b = toks("red car");
    const auto va = stub.embed(a), vb = stub.embed(b);
    const auto wa = idf.weights(a), wb = idf.weights(b);
    const auto plain = embed_score(va, vb);
    EXPECT_DOUBLE_EQ(plain.f1, 0.5);
    // the only shared token carries zero weight
    const auto weighted = embed_score(va, vb, wa, wb);
    EXPECT_EQ(weighted.recall, 0.0);
    EXPECT_EQ(weighted.f1, 0.0);
    EXPECT_EQ(embed_score(va, va, wa, wa).f1, 1.0);
    const std::vector<double> short_weights{1.0};
    EXPECT_THROW(embed_score(va, vb, short_weights, wb), ContractError);

    const auto r = rescale_with_baseline(plain, 0.2);
    EXPECT_DOUBLE_EQ(r.f1, 0.375);
    EXPECT_DOUBLE_EQ(rescale_with_baseline({1, 1, 1}, 0.8).f1, 1.0);
    EXPECT_THROW(rescale_with_baseline(plain, 1.0), ContractError);
}

TEST(Embedding, SparseDotAndNorm) {
    const double d1[] = {0, 2, 0, 3}, d2[] = {1, 4, 0, -1};
    const auto a = TokenVector::from_dense(d1);
    const auto b = TokenVector::from_dense(d2);
    EXPECT_EQ(a.index, (std::vector<std::uint32_t>{1, 3}));
    EXPECT_DOUBLE_EQ(dot(a, b), 8.0 - 3.0);
    EXPECT_DOUBLE_EQ(norm(a), std::sqrt(13.0));
}

TEST(SemanticSymmetry, ExactOnRandomTexts) {
    std::mt19937_64 rng(19);
    OrthogonalStubBackend stub;
    std::vector<TokenSequence> docs;
    for (int i = 0; i < 40; ++i) docs.push_back(random_tokens(rng, 12, 8));
    const Bm25Corpus corpus(docs);
    for (std::size_t i = 0; i + 1 < docs.size(); ++i) {
        const auto& a = docs[i];
        const auto& b = docs[i + 1];
        EXPECT_EQ(rouge_l(a, b), rouge_l(b, a));
        EXPECT_EQ(bleu_4(a, b), bleu_4(b, a));
        EXPECT_EQ(bm25_pair(a, b, corpus), bm25_pair(b, a, corpus));
        EXPECT_EQ(embed_score(a, b, stub).f1, embed_score(b, a, stub).f1);
    }
}
