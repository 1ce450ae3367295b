#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "sema/error.hpp"
#include "sema/text.hpp"

namespace sema {

/// Text similarity scores for one pair of scanpath summaries.
struct SemanticScoreSet {
    double embed_precision = 0.0;
    double embed_recall = 0.0;
    double embed_f1 = 0.0;
    double rouge_l = 0.0;
    double bleu_4 = 0.0;
    double bm25_raw = 0.0;
    /// Min-max normalized over the condition; filled by normalize_bm25.
    std::optional<double> bm25_norm;
};

// ---------------------------------------------------------------------------
// ROUGE-L

inline std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

/// LCS F1 with P = LCS/|b| and R = LCS/|a|. Zero when either side is empty.
inline double rouge_l(const TokenSequence& a, const TokenSequence& b) {
    const auto lcs = lcs_length(a, b);
    if (lcs == 0) return 0.0;
    const double p = static_cast<double>(lcs) / static_cast<double>(b.size());
    const double r = static_cast<double>(lcs) / static_cast<double>(a.size());
    return 2.0 * p * r / (p + r);
}

// ---------------------------------------------------------------------------
// BLEU-4

namespace detail {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

inline NgramCounts ngram_counts(const TokenSequence& tokens, std::size_t n) {
    NgramCounts counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                          tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return counts;
}

}  // namespace detail

/// Directional sentence BLEU-4. Unigram precision is unsmoothed; orders
/// 2..4 use (matches + 1) / (total + 1). Brevity penalty applies when the
/// candidate is shorter than the reference.
inline double bleu_4_directional(const TokenSequence& candidate, const TokenSequence& reference) {
    if (candidate.empty()) return 0.0;
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
        const auto cand = detail::ngram_counts(candidate, n);
        const auto ref = detail::ngram_counts(reference, n);
        std::size_t matched = 0;
        std::size_t total = 0;
        for (const auto& [gram, count] : cand) {
            total += count;
            const auto it = ref.find(gram);
            if (it != ref.end()) matched += std::min(count, it->second);
        }
        double precision;
        if (n == 1) {
            if (matched == 0) return 0.0;
            precision = static_cast<double>(matched) / static_cast<double>(total);
        } else {
            precision = static_cast<double>(matched + 1) / static_cast<double>(total + 1);
        }
        log_sum += std::log(precision);
    }
    double bleu = std::exp(log_sum / 4.0);
    if (candidate.size() < reference.size()) {
        bleu *= std::exp(1.0 - static_cast<double>(reference.size()) /
                                   static_cast<double>(candidate.size()));
    }
    return bleu;
}

/// Pair score: mean of both directions.
inline double bleu_4(const TokenSequence& a, const TokenSequence& b) {
    return 0.5 * (bleu_4_directional(a, b) + bleu_4_directional(b, a));
}

// ---------------------------------------------------------------------------
// BM25

struct Bm25Params {
    double k1 = 1.5;
    double b = 0.75;
};

/// Document statistics for one scoring universe (all summaries of one
/// condition). Immutable after construction.
class Bm25Corpus {
  public:
    explicit Bm25Corpus(const std::vector<TokenSequence>& documents, Bm25Params params = {})
        : params_(params), size_(documents.size()) {
        if (documents.empty()) throw ContractError("BM25 corpus must not be empty");
        std::size_t total_length = 0;
        for (const auto& doc : documents) {
            total_length += doc.size();
            std::unordered_set<std::string_view> seen;
            for (const auto& t : doc) {
                if (seen.insert(t).second) ++df_[t];
            }
        }
        avgdl_ = static_cast<double>(total_length) / static_cast<double>(size_);
    }

    std::size_t size() const noexcept { return size_; }
    double average_length() const noexcept { return avgdl_; }
    const Bm25Params& params() const noexcept { return params_; }

    std::size_t document_frequency(const std::string& term) const {
        const auto it = df_.find(term);
        return it == df_.end() ? 0 : it->second;
    }

    /// ln((N - df + 0.5) / (df + 0.5) + 1), never negative.
    double idf(const std::string& term) const {
        const double n = static_cast<double>(size_);
        const double df = static_cast<double>(document_frequency(term));
        return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
    }

    /// Okapi BM25 of `doc` for `query`; repeated query terms count each time.
    double score(const TokenSequence& query, const TokenSequence& doc) const {
        if (query.empty() || doc.empty() || avgdl_ <= 0.0) return 0.0;
        std::unordered_map<std::string_view, std::size_t> tf;
        for (const auto& t : doc) ++tf[t];
        const double norm =
            params_.k1 * (1.0 - params_.b + params_.b * static_cast<double>(doc.size()) / avgdl_);
        double total = 0.0;
        for (const auto& term : query) {
            const auto it = tf.find(term);
            if (it == tf.end()) continue;
            const double f = static_cast<double>(it->second);
            total += idf(term) * f * (params_.k1 + 1.0) / (f + norm);
        }
        return total;
    }

  private:
    Bm25Params params_;
    std::size_t size_ = 0;
    double avgdl_ = 0.0;
    std::map<std::string, std::size_t, std::less<>> df_;
};

/// Raw symmetric pair score: mean of both query directions.
inline double bm25_pair(const TokenSequence& a, const TokenSequence& b, const Bm25Corpus& corpus) {
    return 0.5 * (corpus.score(a, b) + corpus.score(b, a));
}

/// Min-max scaling into [0,1]; a constant column maps to 1.0.
inline std::vector<double> min_max_scale(std::span<const double> values) {
    std::vector<double> out(values.size(), 1.0);
    if (values.empty()) return out;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double range = *hi - *lo;
    if (range <= 0.0) return out;
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *lo) / range;
    return out;
}

/// Fills bm25_norm for every score set of one condition.
inline void normalize_bm25(std::span<SemanticScoreSet> scores) {
    std::vector<double> raw;
    raw.reserve(scores.size());
    for (const auto& s : scores) raw.push_back(s.bm25_raw);
    const auto scaled = min_max_scale(raw);
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i].bm25_norm = scaled[i];
}

// ---------------------------------------------------------------------------
// Embedding-based score

/// Sparse token vector: strictly increasing indices, parallel values.
struct TokenVector {
    std::vector<std::uint32_t> index;
    std::vector<double> value;

    static TokenVector from_dense(std::span<const double> dense) {
        TokenVector v;
        for (std::size_t i = 0; i < dense.size(); ++i) {
            if (dense[i] != 0.0) {
                v.index.push_back(static_cast<std::uint32_t>(i));
                v.value.push_back(dense[i]);
            }
        }
        return v;
    }

    static TokenVector one_hot(std::uint32_t i) { return {{i}, {1.0}}; }
};

inline double dot(const TokenVector& a, const TokenVector& b) {
    double sum = 0.0;
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < a.index.size() && j < b.index.size()) {
        if (a.index[i] < b.index[j]) {
            ++i;
        } else if (b.index[j] < a.index[i]) {
            ++j;
        } else {
            sum += a.value[i++] * b.value[j++];
        }
    }
    return sum;
}

inline double norm(const TokenVector& v) {
    double sum = 0.0;
    for (double x : v.value) sum += x * x;
    return std::sqrt(sum);
}

/// Maps tokens to one vector each, all of the same dimension.
/// Implementations must be safe to call from several threads.
class EmbeddingBackend {
  public:
    virtual ~EmbeddingBackend() = default;
    virtual std::size_t dimension() const = 0;
    virtual std::vector<TokenVector> embed(const TokenSequence& tokens) = 0;
};

/// Test backend: every distinct token gets its own basis vector, so distinct
/// tokens are exactly orthogonal and equal tokens have cosine 1.
class OrthogonalStubBackend final : public EmbeddingBackend {
  public:
    explicit OrthogonalStubBackend(std::size_t dimension = std::size_t{1} << 24)
        : dimension_(dimension) {}

    std::size_t dimension() const override { return dimension_; }

    std::vector<TokenVector> embed(const TokenSequence& tokens) override {
        std::lock_guard lock(mutex_);
        std::vector<TokenVector> out;
        out.reserve(tokens.size());
        for (const auto& t : tokens) {
            auto [it, inserted] = vocabulary_.try_emplace(t, vocabulary_.size());
            if (it->second >= dimension_) {
                throw ContractError("orthogonal stub vocabulary exceeds its dimension");
            }
            out.push_back(TokenVector::one_hot(static_cast<std::uint32_t>(it->second)));
        }
        return out;
    }

  private:
    std::size_t dimension_;
    std::mutex mutex_;
    std::unordered_map<std::string, std::size_t> vocabulary_;
};

struct EmbedScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Inverse document frequency log((M + 1) / (df + 1)) over a document set.
class IdfTable {
  public:
    explicit IdfTable(std::span<const TokenSequence> documents) : documents_(documents.size()) {
        for (const auto& doc : documents) {
            for (const auto& t : std::unordered_set<std::string>(doc.begin(), doc.end())) ++df_[t];
        }
    }

    double operator()(const std::string& token) const {
        const auto it = df_.find(token);
        const double df = it == df_.end() ? 0.0 : static_cast<double>(it->second);
        return std::log((static_cast<double>(documents_) + 1.0) / (df + 1.0));
    }

    std::vector<double> weights(const TokenSequence& tokens) const {
        std::vector<double> w;
        w.reserve(tokens.size());
        for (const auto& t : tokens) w.push_back((*this)(t));
        return w;
    }

  private:
    std::size_t documents_;
    std::unordered_map<std::string, std::size_t> df_;
};

/// Greedy matching on the token cosine matrix. R averages each a-token's
/// best match in b, P each b-token's best match in a; negative averages are
/// floored at 0. Optional per-token weights turn the averages into weighted
/// means (empty spans mean uniform weights).
inline EmbedScore embed_score(const std::vector<TokenVector>& a, const std::vector<TokenVector>& b,
                              std::span<const double> weights_a = {}, std::span<const double> weights_b = {}) {
    if (a.empty() || b.empty()) {
        throw ContractError("embedding score is undefined for an empty token sequence");
    }
    if ((!weights_a.empty() && weights_a.size() != a.size()) || (!weights_b.empty() && weights_b.size() != b.size())) {
        throw ContractError("token weights must match the token count");
    }
    std::vector<double> norm_a(a.size()), norm_b(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) norm_a[i] = norm(a[i]);
    for (std::size_t j = 0; j < b.size(); ++j) norm_b[j] = norm(b[j]);

    std::vector<double> best_a(a.size(), -1.0), best_b(b.size(), -1.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            const double denom = norm_a[i] * norm_b[j];
            double cosine = denom > 0.0 ? dot(a[i], b[j]) / denom : 0.0;
            cosine = std::clamp(cosine, -1.0, 1.0);
            best_a[i] = std::max(best_a[i], cosine);
            best_b[j] = std::max(best_b[j], cosine);
        }
    }
    auto weighted_mean = [](const std::vector<double>& v, std::span<const double> w) {
        double sum = 0.0, total = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double wi = w.empty() ? 1.0 : w[i];
            sum += wi * v[i];
            total += wi;
        }
        return total > 0.0 ? sum / total : 0.0;
    };
    const double recall = std::max(0.0, weighted_mean(best_a, weights_a));
    const double precision = std::max(0.0, weighted_mean(best_b, weights_b));
    const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    return {precision, recall, f1};
}

inline EmbedScore embed_score(const TokenSequence& a, const TokenSequence& b,
                              EmbeddingBackend& backend) {
    if (a.empty() || b.empty()) {
        throw ContractError("embedding score is undefined for an empty token sequence");
    }
    const auto va = backend.embed(a);
    const auto vb = backend.embed(b);
    if (va.size() != a.size() || vb.size() != b.size()) {
        throw Error("embedding backend returned the wrong number of vectors");
    }
    return embed_score(va, vb);
}

/// Linear rescaling (x - b) / (1 - b) of P, R and F1 against a baseline b < 1.
inline EmbedScore rescale_with_baseline(const EmbedScore& s, double baseline) {
    if (!(baseline < 1.0)) throw ContractError("embedding baseline must be below 1");
    auto r = [baseline](double x) { return (x - baseline) / (1.0 - baseline); };
    return {r(s.precision), r(s.recall), r(s.f1)};
}

}  // namespace sema
