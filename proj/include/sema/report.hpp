#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sema/analysis.hpp"
#include "sema/error.hpp"

namespace sema {

// ---------------------------------------------------------------------------
// CSV primitives

namespace csv {

inline std::string quote(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string number(const std::optional<double>& v) { return v ? number(*v) : std::string(); }

inline std::string row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += quote(fields[i]);
    }
    return out;
}

/// RFC 4180 records; quoted fields may contain separators and newlines.
inline std::vector<std::vector<std::string>> parse(std::istream& in) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    bool any = false;
    char c;
    while (in.get(c)) {
        any = true;
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field += '"';
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            fields.push_back(std::move(field));
            field.clear();
            rows.push_back(std::move(fields));
            fields.clear();
            any = false;
        } else if (c != '\r') {
            field += c;
        }
    }
    if (any) {
        fields.push_back(std::move(field));
        rows.push_back(std::move(fields));
    }
    return rows;
}

}  // namespace csv

// ---------------------------------------------------------------------------
// Pair score table

inline const std::vector<std::string>& pair_csv_header() {
    static const std::vector<std::string> header{
        "image_id",     "subject_a",       "subject_b",      "condition",     "embed_precision",
        "embed_recall", "embed_f1",        "rouge_l",        "bleu_4",        "bm25_raw",
        "bm25_norm",    "dtw",             "scanmatch",      "mm_shape",      "mm_direction",
        "mm_length",    "mm_position",     "mm_duration",    "mm_mean",       "hausdorff",
        "tde",          "levenshtein",     "sim_scanmatch",  "sim_dtw",       "sim_multimatch",
        "sim_hausdorff", "sim_tde",        "sim_levenshtein"};
    return header;
}

inline void write_pair_csv(std::ostream& out, const std::vector<PairScoreRecord>& records) {
    out << csv::row(pair_csv_header()) << '\n';
    for (const auto& r : records) {
        const auto& s = r.semantic;
        const auto& p = r.spatial;
        std::vector<std::string> f{r.pair.image_id,
                                   r.pair.subject_a,
                                   r.pair.subject_b,
                                   r.condition,
                                   csv::number(s.embed_precision),
                                   csv::number(s.embed_recall),
                                   csv::number(s.embed_f1),
                                   csv::number(s.rouge_l),
                                   csv::number(s.bleu_4),
                                   csv::number(s.bm25_raw),
                                   csv::number(s.bm25_norm),
                                   csv::number(p.dtw),
                                   csv::number(p.scanmatch)};
        if (p.multimatch) {
            const auto& m = *p.multimatch;
            for (double v : {m.shape, m.direction, m.length, m.position, m.duration, m.mean()}) {
                f.push_back(csv::number(v));
            }
        } else {
            f.insert(f.end(), 6, std::string());
        }
        f.push_back(csv::number(p.hausdorff));
        f.push_back(csv::number(p.tde));
        f.push_back(std::to_string(p.levenshtein));
        for (const auto m : kSpatialMetrics) f.push_back(csv::number(r.normalized(m)));
        out << csv::row(f) << '\n';
    }
}

inline void write_pair_csv(const std::filesystem::path& path, const std::vector<PairScoreRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    write_pair_csv(out, records);
}

inline std::vector<PairScoreRecord> read_pair_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("pair score file not found: " + path.string());
    const auto rows = csv::parse(in);
    const auto& header = pair_csv_header();
    if (rows.empty() || rows.front() != header) {
        throw DataError(path.string() + ": unexpected pair score header");
    }
    auto num = [&](const std::string& s, std::size_t line) -> std::optional<double> {
        if (s.empty()) return std::nullopt;
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw DataError(path.string() + ":" + std::to_string(line) + ": bad number '" + s + "'");
        }
    };
    auto req = [&](const std::string& s, std::size_t line) {
        const auto v = num(s, line);
        if (!v) throw DataError(path.string() + ":" + std::to_string(line) + ": missing required value");
        return *v;
    };
    std::vector<PairScoreRecord> records;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& f = rows[i];
        const auto line = i + 1;
        if (f.size() != header.size()) {
            throw DataError(path.string() + ":" + std::to_string(line) + ": expected " +
                            std::to_string(header.size()) + " fields");
        }
        PairScoreRecord r;
        r.pair = {f[0], f[1], f[2]};
        r.condition = f[3];
        r.semantic.embed_precision = req(f[4], line);
        r.semantic.embed_recall = req(f[5], line);
        r.semantic.embed_f1 = req(f[6], line);
        r.semantic.rouge_l = req(f[7], line);
        r.semantic.bleu_4 = req(f[8], line);
        r.semantic.bm25_raw = req(f[9], line);
        r.semantic.bm25_norm = num(f[10], line);
        r.spatial.dtw = req(f[11], line);
        r.spatial.scanmatch = req(f[12], line);
        if (!f[13].empty()) {
            r.spatial.multimatch = MultiMatchResult{req(f[13], line), req(f[14], line), req(f[15], line),
                                                    req(f[16], line), req(f[17], line)};
        }
        r.spatial.hausdorff = req(f[19], line);
        r.spatial.tde = num(f[20], line);
        r.spatial.levenshtein = static_cast<std::size_t>(req(f[21], line));
        for (std::size_t k = 0; k < kSpatialMetrics.size(); ++k) r.normalized_spatial[k] = num(f[22 + k], line);
        records.push_back(std::move(r));
    }
    return records;
}

// ---------------------------------------------------------------------------
// Correlation matrix and divergence tables

inline nlohmann::json to_json(const CorrelationMatrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    nlohmann::json cols = nlohmann::json::array();
    for (const auto s : kSemanticMetrics) rows.push_back(name(s));
    for (const auto p : kSpatialMetrics) cols.push_back(name(p));
    nlohmann::json cells = nlohmann::json::array();
    for (const auto s : kSemanticMetrics) {
        nlohmann::json row = nlohmann::json::array();
        for (const auto p : kSpatialMetrics) {
            const auto& c = m.at(s, p);
            row.push_back({{"rho", c.rho ? nlohmann::json(*c.rho) : nlohmann::json()}, {"n_pairs", c.n}});
        }
        cells.push_back(std::move(row));
    }
    return {{"condition", m.condition}, {"rows", rows}, {"cols", cols}, {"cells", cells}};
}

inline void write_divergence_csv(const std::filesystem::path& path, const std::vector<DivergenceRecord>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << csv::row({"image_id", "subject_a", "subject_b", "semantic_metric", "spatial_metric",
                     "sim_text", "sim_spatial", "D"})
        << '\n';
    for (const auto& d : rows) {
        out << csv::row({d.pair.image_id, d.pair.subject_a, d.pair.subject_b, name(d.semantic), name(d.spatial),
                         csv::number(d.semantic_similarity), csv::number(d.spatial_similarity), csv::number(d.d)})
            << '\n';
    }
}

/// Highest |D| across every metric combination; ties keep generation order.
inline std::vector<DivergenceRecord> top_divergences(std::span<const PairScoreRecord> records, std::size_t k) {
    auto all = all_divergences(records);
    std::stable_sort(all.begin(), all.end(),
                     [](const auto& a, const auto& b) { return std::abs(a.d) > std::abs(b.d); });
    if (all.size() > k) all.resize(k);
    return all;
}

// ---------------------------------------------------------------------------
// Heatmap

/// Diverging blue-white-red over [-1, 1], white at 0.
inline Rgb heatmap_color(double rho) {
    constexpr Rgb blue{33, 102, 172};
    constexpr Rgb red{178, 24, 43};
    const double t = std::clamp(std::abs(rho), 0.0, 1.0);
    const Rgb end = rho < 0.0 ? blue : red;
    auto mix = [t](std::uint8_t target) {
        return static_cast<std::uint8_t>(std::lround(255.0 + (target - 255.0) * t));
    };
    return {mix(end.r), mix(end.g), mix(end.b)};
}

inline constexpr Rgb kMissingCell{191, 191, 191};

inline std::string svg_color(Rgb c) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
    return buf;
}

/// Semantic rows x spatial columns; cell text is rho to two decimals, or an
/// en dash on gray when the cell is missing.
inline std::string heatmap_svg(const CorrelationMatrix& m) {
    constexpr int cell_w = 96, cell_h = 44, left = 110, top = 70;
    const int width = left + cell_w * static_cast<int>(kSpatialMetrics.size()) + 20;
    const int height = top + cell_h * static_cast<int>(kSemanticMetrics.size()) + 20;
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"13\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">Spearman rho ("
        << m.condition << ")</text>\n";
    for (std::size_t c = 0; c < kSpatialMetrics.size(); ++c) {
        svg << "<text x=\"" << left + cell_w * static_cast<int>(c) + cell_w / 2 << "\" y=\"" << top - 10
            << "\" text-anchor=\"middle\">" << name(kSpatialMetrics[c]) << "</text>\n";
    }
    for (std::size_t r = 0; r < kSemanticMetrics.size(); ++r) {
        const int y = top + cell_h * static_cast<int>(r);
        svg << "<text x=\"" << left - 8 << "\" y=\"" << y + cell_h / 2 + 5 << "\" text-anchor=\"end\">"
            << name(kSemanticMetrics[r]) << "</text>\n";
        for (std::size_t c = 0; c < kSpatialMetrics.size(); ++c) {
            const int x = left + cell_w * static_cast<int>(c);
            const auto& cell = m.cells[r][c];
            const auto fill = cell.rho ? heatmap_color(*cell.rho) : kMissingCell;
            std::string label = "\xE2\x80\x93";
            if (cell.rho) {
                char buf[16];
                std::snprintf(buf, sizeof buf, "%.2f", *cell.rho);
                label = buf;
            }
            svg << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell_w << "\" height=\"" << cell_h
                << "\" fill=\"" << svg_color(fill) << "\" stroke=\"#ffffff\"/>\n";
            svg << "<text x=\"" << x + cell_w / 2 << "\" y=\"" << y + cell_h / 2 + 5
                << "\" text-anchor=\"middle\">" << label << "</text>\n";
        }
    }
    svg << "</svg>\n";
    return svg.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

}  // namespace sema
