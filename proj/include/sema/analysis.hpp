#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sema/error.hpp"
#include "sema/gaze_data.hpp"
#include "sema/log.hpp"
#include "sema/semantic_metrics.hpp"
#include "sema/spatial_metrics.hpp"
#include "sema/text.hpp"

namespace sema {

enum class SemanticMetric { embed_f1, rouge_l, bleu_4, bm25 };
enum class SpatialMetric { scanmatch, dtw, multimatch, hausdorff, tde, levenshtein };

inline constexpr std::array kSemanticMetrics{SemanticMetric::embed_f1, SemanticMetric::rouge_l,
                                             SemanticMetric::bleu_4, SemanticMetric::bm25};
inline constexpr std::array kSpatialMetrics{SpatialMetric::scanmatch,  SpatialMetric::dtw,
                                            SpatialMetric::multimatch, SpatialMetric::hausdorff,
                                            SpatialMetric::tde,        SpatialMetric::levenshtein};

inline std::string name(SemanticMetric m) {
    switch (m) {
        case SemanticMetric::embed_f1: return "embed_f1";
        case SemanticMetric::rouge_l: return "rouge_l";
        case SemanticMetric::bleu_4: return "bleu_4";
        case SemanticMetric::bm25: return "bm25";
    }
    return {};
}

inline std::string name(SpatialMetric m) {
    switch (m) {
        case SpatialMetric::scanmatch: return "scanmatch";
        case SpatialMetric::dtw: return "dtw";
        case SpatialMetric::multimatch: return "multimatch";
        case SpatialMetric::hausdorff: return "hausdorff";
        case SpatialMetric::tde: return "tde";
        case SpatialMetric::levenshtein: return "levenshtein";
    }
    return {};
}

/// Distances are inverted during normalization; similarities pass through.
inline bool is_distance(SpatialMetric m) {
    return m == SpatialMetric::dtw || m == SpatialMetric::hausdorff || m == SpatialMetric::tde ||
           m == SpatialMetric::levenshtein;
}

struct PairScoreRecord {
    ScanpathPair pair;
    std::string condition;
    SemanticScoreSet semantic;
    SpatialScoreSet spatial;
    /// Indexed like kSpatialMetrics; empty where the raw value is missing.
    std::array<std::optional<double>, kSpatialMetrics.size()> normalized_spatial{};

    std::optional<double> semantic_value(SemanticMetric m) const {
        switch (m) {
            case SemanticMetric::embed_f1: return semantic.embed_f1;
            case SemanticMetric::rouge_l: return semantic.rouge_l;
            case SemanticMetric::bleu_4: return semantic.bleu_4;
            case SemanticMetric::bm25: return semantic.bm25_norm;
        }
        return std::nullopt;
    }

    std::optional<double> raw_spatial(SpatialMetric m) const {
        switch (m) {
            case SpatialMetric::scanmatch: return spatial.scanmatch;
            case SpatialMetric::dtw: return spatial.dtw;
            case SpatialMetric::multimatch:
                if (spatial.multimatch) return spatial.multimatch->mean();
                return std::nullopt;
            case SpatialMetric::hausdorff: return spatial.hausdorff;
            case SpatialMetric::tde: return spatial.tde;
            case SpatialMetric::levenshtein: return static_cast<double>(spatial.levenshtein);
        }
        return std::nullopt;
    }

    std::optional<double> normalized(SpatialMetric m) const {
        return normalized_spatial[static_cast<std::size_t>(m)];
    }
};

enum class NormScope { condition, image };

// ---------------------------------------------------------------------------
// Normalization

/// Fills normalized_spatial. Distances become 1 - (d - min)/(max - min)
/// over the scope's non-missing values; constant groups map to 1.0.
inline void normalize_spatial(std::span<PairScoreRecord> records, NormScope scope = NormScope::condition) {
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < records.size(); ++i) {
        groups[scope == NormScope::image ? records[i].pair.image_id : std::string()].push_back(i);
    }
    for (const auto metric : kSpatialMetrics) {
        const auto slot = static_cast<std::size_t>(metric);
        bool any_value = false;
        for (const auto& [group, members] : groups) {
            std::vector<double> values;
            for (auto i : members) {
                if (const auto v = records[i].raw_spatial(metric)) values.push_back(*v);
            }
            if (values.empty()) {
                for (auto i : members) records[i].normalized_spatial[slot].reset();
                continue;
            }
            any_value = true;
            const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
            const double min = *lo;
            const double range = *hi - *lo;
            if (is_distance(metric) && range <= 0.0) {
                warn("constant " + name(metric) + " column" +
                     (group.empty() ? std::string() : " for image '" + group + "'") +
                     "; normalized to 1.0");
            }
            for (auto i : members) {
                auto& out = records[i].normalized_spatial[slot];
                const auto v = records[i].raw_spatial(metric);
                if (!v) {
                    out.reset();
                } else if (!is_distance(metric)) {
                    out = *v;
                } else {
                    out = range > 0.0 ? 1.0 - (*v - min) / range : 1.0;
                }
            }
        }
        if (!any_value && !records.empty()) {
            warn(name(metric) + " is missing for every pair; metric dropped");
        }
    }
}

// ---------------------------------------------------------------------------
// Spearman

/// 1-based ranks; ties share the mean of the ranks they span.
inline std::vector<double> mid_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

/// Pearson correlation; empty if either side is constant.
inline std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw ContractError("pearson: length mismatch");
    const auto n = static_cast<double>(xs.size());
    if (xs.empty()) return std::nullopt;
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Pearson on mid-ranks. Empty for n < 3 or a constant variable.
inline std::optional<double> spearman(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw ContractError("spearman: length mismatch");
    if (xs.size() < 3) return std::nullopt;
    const auto rx = mid_ranks(xs);
    const auto ry = mid_ranks(ys);
    return pearson(rx, ry);
}

struct Correlation {
    std::optional<double> rho;
    std::size_t n = 0;
};

/// Pairwise deletion of positions where either side is missing.
inline Correlation spearman(const std::vector<std::optional<double>>& xs,
                            const std::vector<std::optional<double>>& ys) {
    if (xs.size() != ys.size()) throw ContractError("spearman: length mismatch");
    std::vector<double> x, y;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i] && ys[i]) {
            x.push_back(*xs[i]);
            y.push_back(*ys[i]);
        }
    }
    return {spearman(x, y), x.size()};
}

// ---------------------------------------------------------------------------
// Correlation matrix

struct CorrelationMatrix {
    std::string condition;
    std::array<std::array<Correlation, kSpatialMetrics.size()>, kSemanticMetrics.size()> cells{};

    const Correlation& at(SemanticMetric s, SpatialMetric p) const {
        return cells[static_cast<std::size_t>(s)][static_cast<std::size_t>(p)];
    }
};

/// Spearman of every semantic metric against every normalized spatial metric.
inline CorrelationMatrix correlation_matrix(std::span<const PairScoreRecord> records,
                                            std::string condition = {}) {
    CorrelationMatrix matrix;
    matrix.condition = std::move(condition);
    for (const auto s : kSemanticMetrics) {
        std::vector<std::optional<double>> xs;
        for (const auto& r : records) xs.push_back(r.semantic_value(s));
        for (const auto p : kSpatialMetrics) {
            std::vector<std::optional<double>> ys;
            for (const auto& r : records) ys.push_back(r.normalized(p));
            matrix.cells[static_cast<std::size_t>(s)][static_cast<std::size_t>(p)] = spearman(xs, ys);
        }
    }
    return matrix;
}

// ---------------------------------------------------------------------------
// Divergence

struct DivergenceRecord {
    ScanpathPair pair;
    SemanticMetric semantic;
    SpatialMetric spatial;
    double semantic_similarity = 0.0;
    double spatial_similarity = 0.0;
    double d = 0.0;
};

/// D = Sim_text - normalized Sim_spatial; positive means similar content at
/// different locations. Sorted by |D| descending, ties keep record order.
inline std::vector<DivergenceRecord> divergence(std::span<const PairScoreRecord> records,
                                                SemanticMetric semantic, SpatialMetric spatial) {
    std::vector<DivergenceRecord> out;
    for (const auto& r : records) {
        const auto text = r.semantic_value(semantic);
        const auto geo = r.normalized(spatial);
        if (!text || !geo) continue;
        out.push_back({r.pair, semantic, spatial, *text, *geo, *text - *geo});
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return std::abs(a.d) > std::abs(b.d);
    });
    return out;
}

/// Every semantic x spatial combination, each sorted as in divergence().
inline std::vector<DivergenceRecord> all_divergences(std::span<const PairScoreRecord> records) {
    std::vector<DivergenceRecord> out;
    for (const auto s : kSemanticMetrics) {
        for (const auto p : kSpatialMetrics) {
            auto part = divergence(records, s, p);
            out.insert(out.end(), part.begin(), part.end());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Description diagnostics

inline const std::vector<std::string>& default_blur_lexicon() {
    static const std::vector<std::string> lexicon{"blur",       "blurry",     "blurred", "texture",
                                                  "textured",   "indistinct", "unclear", "background",
                                                  "abstract",   "pattern"};
    return lexicon;
}

struct BlurDiagnostics {
    std::size_t descriptions = 0;
    std::size_t flagged = 0;
    double rate = 0.0;
    /// Number of descriptions containing each lexicon token.
    std::map<std::string, std::size_t> token_counts;
};

inline BlurDiagnostics blur_diagnostics(std::span<const std::string> descriptions,
                                        const std::vector<std::string>& lexicon = default_blur_lexicon()) {
    if (descriptions.empty()) throw ContractError("blur diagnostics need at least one description");
    BlurDiagnostics out;
    out.descriptions = descriptions.size();
    for (const auto& t : lexicon) out.token_counts[t] = 0;
    for (const auto& text : descriptions) {
        const auto tokens = tokenize(text);
        const std::set<std::string> present(tokens.begin(), tokens.end());
        bool hit = false;
        for (auto& [token, count] : out.token_counts) {
            if (present.count(token)) {
                ++count;
                hit = true;
            }
        }
        if (hit) ++out.flagged;
    }
    out.rate = static_cast<double>(out.flagged) / static_cast<double>(out.descriptions);
    return out;
}

}  // namespace sema
