#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "sema/error.hpp"
#include "sema/gaze_data.hpp"

namespace sema {

/// Stimulus grid used by the string-based metrics.
struct GridSpec {
    int cols = 14;
    int rows = 8;

    void validate() const {
        if (cols <= 0 || rows <= 0) throw ContractError("grid dimensions must be positive");
        if (cols * rows > 26 * 26) {
            throw ContractError("grid has more cells than a two-letter alphabet can encode");
        }
    }

    int cells() const noexcept { return cols * rows; }
};

struct ScanMatchParams {
    /// Score subtracted per gap (0 = free gaps).
    double gap_penalty = 0.0;
    double max_sub = 1.0;
};

struct TdeParams {
    int m = 3;
    int delay = 1;

    void validate() const {
        if (m < 1 || delay < 1) throw ContractError("TDE dimension and delay must be >= 1");
    }

    std::size_t min_length() const noexcept {
        return static_cast<std::size_t>((m - 1) * delay + 1);
    }
};

struct SpatialParams {
    GridSpec grid{};
    ScanMatchParams scanmatch{};
    TdeParams tde{};
};

namespace detail {

inline double distance(const Fixation& a, const Fixation& b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

inline void require_nonempty(const Scanpath& a, const Scanpath& b, const char* metric) {
    if (a.fixations.empty() || b.fixations.empty()) {
        throw ContractError(std::string(metric) + " requires nonempty scanpaths");
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// DTW

/// Accumulated Euclidean cost of the best boundary-anchored warping path with
/// steps (1,0), (0,1), (1,1). Durations are ignored.
inline double dtw(const Scanpath& a, const Scanpath& b) {
    detail::require_nonempty(a, b, "dtw");
    const auto n = a.size();
    const auto m = b.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> prev(m, inf), cur(m, inf);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double cost = detail::distance(a.fixations[i], b.fixations[j]);
            double best;
            if (i == 0 && j == 0) {
                best = 0.0;
            } else {
                best = inf;
                if (i > 0) best = std::min(best, prev[j]);
                if (j > 0) best = std::min(best, cur[j - 1]);
                if (i > 0 && j > 0) best = std::min(best, prev[j - 1]);
            }
            cur[j] = cost + best;
        }
        std::swap(prev, cur);
    }
    return prev[m - 1];
}

// ---------------------------------------------------------------------------
// Grid discretization and Levenshtein

/// Row-major cell index per fixation; repeated cells are kept.
inline std::vector<int> discretize(const Scanpath& s, const GridSpec& grid) {
    grid.validate();
    std::vector<int> symbols;
    symbols.reserve(s.size());
    for (const auto& f : s.fixations) {
        const int col = std::clamp(static_cast<int>(std::floor(f.x * grid.cols)), 0, grid.cols - 1);
        const int row = std::clamp(static_cast<int>(std::floor(f.y * grid.rows)), 0, grid.rows - 1);
        symbols.push_back(row * grid.cols + col);
    }
    return symbols;
}

/// Two-letter label of a cell ("AA", "AB", ...), as used in ScanMatch strings.
inline std::string cell_label(int cell) {
    return {static_cast<char>('A' + cell / 26), static_cast<char>('A' + cell % 26)};
}

inline std::size_t edit_distance(const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

inline std::size_t levenshtein_grid(const Scanpath& a, const Scanpath& b, const GridSpec& grid = {}) {
    detail::require_nonempty(a, b, "levenshtein_grid");
    return edit_distance(discretize(a, grid), discretize(b, grid));
}

// ---------------------------------------------------------------------------
// ScanMatch

/// Substitution score: max_sub at identical cells, falling linearly to 0 at
/// the largest center-to-center distance on the grid.
inline double scanmatch_substitution(int c1, int c2, const GridSpec& grid, double max_sub) {
    auto center = [&](int c) {
        return std::array<double, 2>{(c % grid.cols + 0.5) / grid.cols, (c / grid.cols + 0.5) / grid.rows};
    };
    const auto p = center(c1);
    const auto q = center(c2);
    const auto far = center(grid.cells() - 1);
    const auto near = center(0);
    const double max_dist = std::hypot(far[0] - near[0], far[1] - near[1]);
    if (max_dist <= 0.0) return max_sub;
    const double d = std::hypot(p[0] - q[0], p[1] - q[1]);
    return max_sub * (1.0 - d / max_dist);
}

/// Raw Needleman-Wunsch score over discretized symbol strings.
inline double needleman_wunsch(const std::vector<int>& a, const std::vector<int>& b,
                               const GridSpec& grid, const ScanMatchParams& params) {
    const double gap = params.gap_penalty;
    std::vector<double> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = -gap * static_cast<double>(j);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = -gap * static_cast<double>(i);
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const double diag =
                prev[j - 1] + scanmatch_substitution(a[i - 1], b[j - 1], grid, params.max_sub);
            cur[j] = std::max({diag, prev[j] - gap, cur[j - 1] - gap});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

/// Alignment score divided by max_sub * max(|A|, |B|), clamped to [0,1].
inline double scanmatch(const Scanpath& a, const Scanpath& b, const GridSpec& grid = {},
                        const ScanMatchParams& params = {}) {
    detail::require_nonempty(a, b, "scanmatch");
    if (params.max_sub <= 0.0) throw ContractError("scanmatch max_sub must be positive");
    const auto sa = discretize(a, grid);
    const auto sb = discretize(b, grid);
    const double score = needleman_wunsch(sa, sb, grid, params);
    const double best = params.max_sub * static_cast<double>(std::max(sa.size(), sb.size()));
    return std::clamp(score / best, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// MultiMatch

struct MultiMatchResult {
    double shape = 0.0;
    double direction = 0.0;
    double length = 0.0;
    double position = 0.0;
    double duration = 0.0;

    double mean() const { return (shape + direction + length + position + duration) / 5.0; }
};

struct Saccade {
    double x = 0.0;  // start fixation
    double y = 0.0;
    double dx = 0.0;
    double dy = 0.0;
    double duration_ms = 0.0;  // of the start fixation

    double amplitude() const { return std::hypot(dx, dy); }
    double angle() const { return std::atan2(dy, dx); }
};

inline std::vector<Saccade> saccades(const Scanpath& s) {
    std::vector<Saccade> out;
    for (std::size_t t = 0; t + 1 < s.size(); ++t) {
        const auto& f = s.fixations[t];
        const auto& g = s.fixations[t + 1];
        out.push_back({f.x, f.y, g.x - f.x, g.y - f.y, f.duration_ms});
    }
    return out;
}

/// Vector-difference magnitude between two saccades.
inline double saccade_difference(const Saccade& u, const Saccade& v) {
    return std::hypot(u.dx - v.dx, u.dy - v.dy);
}

/// Cheapest monotone path from (0,0) to (n-1,m-1) through the saccade
/// difference matrix, summing node costs. Ties prefer the diagonal step.
inline std::vector<std::pair<std::size_t, std::size_t>> align_saccades(const std::vector<Saccade>& a,
                                                                       const std::vector<Saccade>& b) {
    const auto n = a.size();
    const auto m = b.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> cost(n * m, inf);
    std::vector<unsigned char> step(n * m, 0);  // 0 diag, 1 from (i-1,j), 2 from (i,j-1)
    auto at = [m](std::size_t i, std::size_t j) { return i * m + j; };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double c = saccade_difference(a[i], b[j]);
            if (i == 0 && j == 0) {
                cost[0] = c;
                continue;
            }
            double best = inf;
            unsigned char from = 0;
            if (i > 0 && j > 0) best = cost[at(i - 1, j - 1)];
            if (i > 0 && cost[at(i - 1, j)] < best) {
                best = cost[at(i - 1, j)];
                from = 1;
            }
            if (j > 0 && cost[at(i, j - 1)] < best) {
                best = cost[at(i, j - 1)];
                from = 2;
            }
            cost[at(i, j)] = best + c;
            step[at(i, j)] = from;
        }
    }
    std::vector<std::pair<std::size_t, std::size_t>> path;
    std::size_t i = n - 1;
    std::size_t j = m - 1;
    while (true) {
        path.emplace_back(i, j);
        if (i == 0 && j == 0) break;
        switch (step[at(i, j)]) {
            case 0: --i; --j; break;
            case 1: --i; break;
            default: --j; break;
        }
    }
    std::reverse(path.begin(), path.end());
    return path;
}

namespace detail {

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double similarity_from(std::vector<double> dissimilarities) {
    return std::clamp(1.0 - median(std::move(dissimilarities)), 0.0, 1.0);
}

/// One argument order. Per dimension the median dissimilarity over the
/// alignment is normalized to [0,1] (shape by 2*sqrt(2), length and position
/// by sqrt(2), direction by pi, duration by the larger duration) and
/// reported as 1 - dissimilarity. Coordinates are normalized, so the unit
/// square's diagonal is sqrt(2).
inline MultiMatchResult multimatch_directed(const Scanpath& a, const Scanpath& b) {
    const auto sa = saccades(a);
    const auto sb = saccades(b);
    const auto path = align_saccades(sa, sb);
    const double diag = std::numbers::sqrt2;

    std::vector<double> shape, direction, length, position, duration;
    for (const auto& [i, j] : path) {
        const auto& u = sa[i];
        const auto& v = sb[j];
        shape.push_back(saccade_difference(u, v) / (2.0 * diag));
        double angle = std::abs(u.angle() - v.angle());
        if (angle > std::numbers::pi) angle = 2.0 * std::numbers::pi - angle;
        direction.push_back(angle / std::numbers::pi);
        length.push_back(std::abs(u.amplitude() - v.amplitude()) / diag);
        position.push_back(std::hypot(u.x - v.x, u.y - v.y) / diag);
        const double longest = std::max(u.duration_ms, v.duration_ms);
        duration.push_back(longest > 0.0 ? std::abs(u.duration_ms - v.duration_ms) / longest : 0.0);
    }
    return {detail::similarity_from(std::move(shape)), detail::similarity_from(std::move(direction)),
            detail::similarity_from(std::move(length)), detail::similarity_from(std::move(position)),
            detail::similarity_from(std::move(duration))};
}

}  // namespace detail

/// Aligned pairs of saccades scored on five dimensions; see
/// detail::multimatch_directed. Both argument orders are averaged because
/// alignment ties may resolve differently.
inline MultiMatchResult multimatch(const Scanpath& a, const Scanpath& b) {
    if (a.size() < 2 || b.size() < 2) {
        throw ContractError("multimatch requires at least 2 fixations per scanpath");
    }
    const auto x = detail::multimatch_directed(a, b);
    const auto y = detail::multimatch_directed(b, a);
    return {0.5 * (x.shape + y.shape), 0.5 * (x.direction + y.direction), 0.5 * (x.length + y.length),
            0.5 * (x.position + y.position), 0.5 * (x.duration + y.duration)};
}

// ---------------------------------------------------------------------------
// Hausdorff

/// Symmetric Hausdorff distance between the fixation point sets.
inline double hausdorff(const Scanpath& a, const Scanpath& b) {
    detail::require_nonempty(a, b, "hausdorff");
    auto directed = [](const Scanpath& from, const Scanpath& to) {
        double worst = 0.0;
        for (const auto& p : from.fixations) {
            double nearest = std::numeric_limits<double>::infinity();
            for (const auto& q : to.fixations) nearest = std::min(nearest, detail::distance(p, q));
            worst = std::max(worst, nearest);
        }
        return worst;
    };
    return std::max(directed(a, b), directed(b, a));
}

// ---------------------------------------------------------------------------
// Time-delay embedding

inline std::vector<std::vector<double>> delay_embed(const Scanpath& s, const TdeParams& params) {
    params.validate();
    std::vector<std::vector<double>> out;
    if (s.size() < params.min_length()) return out;
    const std::size_t span = params.min_length() - 1;
    for (std::size_t t = 0; t + span < s.size(); ++t) {
        std::vector<double> v;
        v.reserve(2 * static_cast<std::size_t>(params.m));
        for (int k = 0; k < params.m; ++k) {
            const auto& f = s.fixations[t + static_cast<std::size_t>(k * params.delay)];
            v.push_back(f.x);
            v.push_back(f.y);
        }
        out.push_back(std::move(v));
    }
    return out;
}

/// Mean nearest-neighbour distance between delay vectors, averaged over both
/// directions.
inline double tde(const Scanpath& a, const Scanpath& b, const TdeParams& params = {}) {
    params.validate();
    if (a.size() < params.min_length() || b.size() < params.min_length()) {
        throw ContractError("tde requires at least " + std::to_string(params.min_length()) +
                            " fixations per scanpath");
    }
    const auto ea = delay_embed(a, params);
    const auto eb = delay_embed(b, params);
    auto directed = [](const std::vector<std::vector<double>>& from,
                       const std::vector<std::vector<double>>& to) {
        double sum = 0.0;
        for (const auto& u : from) {
            double nearest = std::numeric_limits<double>::infinity();
            for (const auto& v : to) {
                double sq = 0.0;
                for (std::size_t k = 0; k < u.size(); ++k) sq += (u[k] - v[k]) * (u[k] - v[k]);
                nearest = std::min(nearest, std::sqrt(sq));
            }
            sum += nearest;
        }
        return sum / static_cast<double>(from.size());
    };
    return 0.5 * (directed(ea, eb) + directed(eb, ea));
}

// ---------------------------------------------------------------------------
// All spatial metrics for one pair

struct SpatialScoreSet {
    double dtw = 0.0;
    double scanmatch = 0.0;
    std::optional<MultiMatchResult> multimatch;
    double hausdorff = 0.0;
    std::optional<double> tde;
    std::size_t levenshtein = 0;
};

/// Metrics whose length requirement is not met are left empty.
inline SpatialScoreSet compute_spatial(const Scanpath& a, const Scanpath& b,
                                       const SpatialParams& params = {}) {
    SpatialScoreSet s;
    s.dtw = dtw(a, b);
    s.scanmatch = scanmatch(a, b, params.grid, params.scanmatch);
    if (a.size() >= 2 && b.size() >= 2) s.multimatch = multimatch(a, b);
    s.hausdorff = hausdorff(a, b);
    if (a.size() >= params.tde.min_length() && b.size() >= params.tde.min_length()) {
        s.tde = tde(a, b, params.tde);
    }
    s.levenshtein = levenshtein_grid(a, b, params.grid);
    return s;
}

}  // namespace sema
