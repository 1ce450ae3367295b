#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sema/analysis.hpp"
#include "sema/report.hpp"
#include "temp_dir.hpp"
#include "warnings.hpp"

using namespace sema;

namespace {

PairScoreRecord record(std::string image, std::string a, std::string b, double f1, double dtw_value,
                       double scanmatch_value) {
    PairScoreRecord r;
    r.pair = {std::move(image), std::move(a), std::move(b)};
    r.condition = "marker";
    r.semantic.embed_f1 = f1;
    r.semantic.rouge_l = f1 / 2;
    r.semantic.bleu_4 = f1 / 3;
    r.semantic.bm25_raw = f1 * 4;
    r.semantic.bm25_norm = f1;
    r.spatial.dtw = dtw_value;
    r.spatial.scanmatch = scanmatch_value;
    r.spatial.hausdorff = dtw_value / 2;
    r.spatial.levenshtein = static_cast<std::size_t>(dtw_value * 10);
    return r;
}

std::vector<PairScoreRecord> random_records(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<PairScoreRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
        auto r = record("img" + std::to_string(i % 7), "s1", "s" + std::to_string(i + 2), u(rng), u(rng), u(rng));
        if (i % 3 == 0) r.spatial.tde = u(rng);
        if (i % 4 != 0) r.spatial.multimatch = MultiMatchResult{u(rng), u(rng), u(rng), u(rng), u(rng)};
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace

TEST(Ranks, MidRanksForTies) {
    const std::vector<double> v{3.0, 1.0, 3.0, 2.0, 3.0};
    EXPECT_EQ(mid_ranks(v), (std::vector<double>{4.0, 1.0, 4.0, 2.0, 4.0}));
    EXPECT_EQ(mid_ranks(std::vector<double>{}), std::vector<double>{});
}

TEST(Spearman, MonotoneAndAntiMonotone) {
    std::vector<double> x, up, down;
    for (int i = 0; i < 30; ++i) {
        x.push_back(i * 0.37 - 2.0);
        up.push_back(std::exp(i * 0.1));
        down.push_back(-std::pow(i, 3));
    }
    EXPECT_DOUBLE_EQ(*spearman(x, up), 1.0);
    EXPECT_DOUBLE_EQ(*spearman(x, down), -1.0);
}

TEST(Spearman, TiesMatchRankPearsonOracle) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::uniform_int_distribution<int> len(3, 20), level(0, 4);
        const int n = len(rng);
        std::vector<double> x, y;
        for (int i = 0; i < n; ++i) {
            x.push_back(level(rng));
            y.push_back(level(rng) * 0.5);
        }
        const auto got = spearman(x, y);
        const double want = oracle::spearman(x, y);
        if (std::isnan(want)) {
            EXPECT_FALSE(got.has_value());
        } else {
            ASSERT_TRUE(got.has_value());
            EXPECT_NEAR(*got, want, 1e-12);
        }
    }
}

TEST(Spearman, InvariantUnderIncreasingTransforms) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> x, y, fx, fy;
        for (int i = 0; i < 40; ++i) {
            x.push_back(g(rng));
            y.push_back(x.back() + g(rng));
            fx.push_back(std::exp(3 * x.back()) + 5);
            fy.push_back(std::atan(y.back()) * 100 - 1);
        }
        EXPECT_EQ(*spearman(x, y), *spearman(fx, fy));
    }
}

TEST(Spearman, DegenerateInputs) {
    EXPECT_FALSE(spearman(std::vector<double>{1, 2}, std::vector<double>{2, 1}).has_value());
    EXPECT_FALSE(spearman(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}).has_value());
    EXPECT_THROW(spearman(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2}), ContractError);
    const auto c = spearman(std::vector<std::optional<double>>{1.0, std::nullopt, 3.0, 4.0, 5.0},
                            std::vector<std::optional<double>>{2.0, 9.0, std::nullopt, 8.0, 10.0});
    EXPECT_EQ(c.n, 3u);
    EXPECT_DOUBLE_EQ(*c.rho, 1.0);
}

TEST(Normalize, DistancesInvertAndSimilaritiesPass) {
    std::vector<PairScoreRecord> rs{record("i", "a", "b", 0.1, 2.0, 0.7), record("i", "a", "c", 0.2, 4.0, 0.3),
                                    record("i", "b", "c", 0.3, 3.0, 0.5)};
    normalize_spatial(rs);
    EXPECT_DOUBLE_EQ(*rs[0].normalized(SpatialMetric::dtw), 1.0);
    EXPECT_DOUBLE_EQ(*rs[1].normalized(SpatialMetric::dtw), 0.0);
    EXPECT_DOUBLE_EQ(*rs[2].normalized(SpatialMetric::dtw), 0.5);
    EXPECT_DOUBLE_EQ(*rs[1].normalized(SpatialMetric::scanmatch), 0.3);
    EXPECT_FALSE(rs[0].normalized(SpatialMetric::tde).has_value());
    EXPECT_FALSE(rs[0].normalized(SpatialMetric::multimatch).has_value());
}

TEST(Normalize, ConstantColumnWarnsAndMapsToOne) {
    sema::testing::CapturedWarnings warnings;
    std::vector<PairScoreRecord> rs{record("i", "a", "b", 0.1, 2.0, 0.7), record("i", "a", "c", 0.2, 2.0, 0.3)};
    normalize_spatial(rs);
    EXPECT_EQ(*rs[0].normalized(SpatialMetric::dtw), 1.0);
    EXPECT_EQ(*rs[1].normalized(SpatialMetric::dtw), 1.0);
    EXPECT_TRUE(warnings.contains("constant dtw column"));
    EXPECT_TRUE(warnings.contains("tde is missing for every pair"));
}

TEST(Normalize, ImageScopeUsesPerImageRange) {
    sema::testing::CapturedWarnings warnings;
    std::vector<PairScoreRecord> rs{record("x", "a", "b", 0, 1.0, 0), record("x", "a", "c", 0, 3.0, 0),
                                    record("y", "a", "b", 0, 10.0, 0), record("y", "a", "c", 0, 20.0, 0)};
    normalize_spatial(rs, NormScope::image);
    EXPECT_EQ(*rs[0].normalized(SpatialMetric::dtw), 1.0);
    EXPECT_EQ(*rs[1].normalized(SpatialMetric::dtw), 0.0);
    EXPECT_EQ(*rs[2].normalized(SpatialMetric::dtw), 1.0);
    normalize_spatial(rs, NormScope::condition);
    EXPECT_NEAR(*rs[2].normalized(SpatialMetric::dtw), 1.0 - 9.0 / 19.0, 1e-15);
}

TEST(CorrelationMatrix, PairwiseDeletionAndMissingCells) {
    sema::testing::CapturedWarnings warnings;
    std::mt19937_64 rng(13);
    auto rs = random_records(rng, 60);
    normalize_spatial(rs);
    const auto m = correlation_matrix(rs, "marker");
    EXPECT_EQ(m.condition, "marker");
    EXPECT_EQ(m.at(SemanticMetric::embed_f1, SpatialMetric::dtw).n, 60u);
    EXPECT_EQ(m.at(SemanticMetric::rouge_l, SpatialMetric::tde).n, 20u);
    EXPECT_EQ(m.at(SemanticMetric::bleu_4, SpatialMetric::multimatch).n, 45u);
    // rouge and bleu are affine in f1, and hausdorff is affine in dtw.
    EXPECT_DOUBLE_EQ(*m.at(SemanticMetric::rouge_l, SpatialMetric::hausdorff).rho,
                     *m.at(SemanticMetric::embed_f1, SpatialMetric::dtw).rho);

    for (auto& r : rs) r.spatial.tde.reset();
    normalize_spatial(rs);
    const auto missing = correlation_matrix(rs);
    EXPECT_FALSE(missing.at(SemanticMetric::bm25, SpatialMetric::tde).rho.has_value());
    EXPECT_EQ(missing.at(SemanticMetric::bm25, SpatialMetric::tde).n, 0u);
}

TEST(Divergence, SignsAndOrdering) {
    std::vector<PairScoreRecord> rs{record("i", "a", "b", 0.9, 4.0, 0.1),   // same text, far apart
                                    record("i", "a", "c", 0.1, 0.0, 0.95),  // different text, same place
                                    record("i", "b", "c", 0.5, 2.0, 0.5)};
    normalize_spatial(rs);
    const auto d = divergence(rs, SemanticMetric::embed_f1, SpatialMetric::dtw);
    ASSERT_EQ(d.size(), 3u);
    EXPECT_EQ(d[0].pair.subject_b, "b");
    EXPECT_NEAR(d[0].d, 0.9, 1e-15);
    EXPECT_NEAR(d[1].d, -0.9, 1e-15);
    EXPECT_EQ(d[2].d, 0.0);
    for (const auto& row : divergence(rs, SemanticMetric::embed_f1, SpatialMetric::scanmatch)) {
        if (row.pair.subject_b == "b") {
            EXPECT_GT(row.d, 0);
        } else if (row.pair.subject_a == "a") {
            EXPECT_LT(row.d, 0);
        }
    }
    EXPECT_EQ(all_divergences(rs).size(), 3u * 4u * 4u);  // tde and multimatch absent
    const auto top = top_divergences(rs, 5);
    ASSERT_EQ(top.size(), 5u);
    for (std::size_t i = 1; i < top.size(); ++i) EXPECT_GE(std::abs(top[i - 1].d), std::abs(top[i].d));
}

TEST(Blur, CountsDescriptionsContainingLexiconTokens) {
    const std::vector<std::string> texts{"A blurry background texture.", "A red boat.", "Blur, blur and more BLUR",
                                         "An abstract pattern."};
    const auto b = blur_diagnostics(texts);
    EXPECT_EQ(b.descriptions, 4u);
    EXPECT_EQ(b.flagged, 3u);
    EXPECT_DOUBLE_EQ(b.rate, 0.75);
    EXPECT_EQ(b.token_counts.at("blur"), 1u);
    EXPECT_EQ(b.token_counts.at("blurry"), 1u);
    EXPECT_EQ(b.token_counts.at("background"), 1u);
    EXPECT_EQ(b.token_counts.at("pattern"), 1u);
    EXPECT_EQ(b.token_counts.at("unclear"), 0u);
    EXPECT_EQ(blur_diagnostics(texts, {"boat"}).flagged, 1u);
    EXPECT_THROW(blur_diagnostics(std::vector<std::string>{}), ContractError);
}

TEST(Report, CsvQuotingAndParsing) {
    EXPECT_EQ(csv::quote("plain"), "plain");
    EXPECT_EQ(csv::quote("a,b"), "\"a,b\"");
    EXPECT_EQ(csv::quote("say \"hi\""), "\"say \"\"hi\"\"\"");
    std::istringstream in("a,\"b,c\",\"d\"\"e\"\r\n\"multi\nline\",,x\n");
    const auto rows = csv::parse(in);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"a", "b,c", "d\"e"}));
    EXPECT_EQ(rows[1], (std::vector<std::string>{"multi\nline", "", "x"}));
    EXPECT_EQ(csv::number(0.1), "0.10000000000000001");
    EXPECT_EQ(csv::number(std::optional<double>{}), "");
}

TEST(Report, PairCsvRoundTripsExactly) {
    sema::testing::CapturedWarnings warnings;
    sema::testing::TempDir dir;
    std::mt19937_64 rng(17);
    auto rs = random_records(rng, 25);
    rs[3].pair.image_id = "odd, \"id\"";
    std::vector<SemanticScoreSet> sem;
    for (auto& r : rs) sem.push_back(r.semantic);
    normalize_bm25(sem);
    for (std::size_t i = 0; i < rs.size(); ++i) rs[i].semantic = sem[i];
    normalize_spatial(rs);
    write_pair_csv(dir / "p.csv", rs);
    const auto back = read_pair_csv(dir / "p.csv");
    ASSERT_EQ(back.size(), rs.size());
    for (std::size_t i = 0; i < rs.size(); ++i) {
        EXPECT_EQ(back[i].pair, rs[i].pair);
        EXPECT_EQ(back[i].semantic.embed_f1, rs[i].semantic.embed_f1);
        EXPECT_EQ(back[i].semantic.bm25_norm, rs[i].semantic.bm25_norm);
        EXPECT_EQ(back[i].spatial.dtw, rs[i].spatial.dtw);
        EXPECT_EQ(back[i].spatial.tde, rs[i].spatial.tde);
        EXPECT_EQ(back[i].spatial.multimatch.has_value(), rs[i].spatial.multimatch.has_value());
        if (rs[i].spatial.multimatch) {
            EXPECT_EQ(back[i].spatial.multimatch->duration, rs[i].spatial.multimatch->duration);
        }
        EXPECT_EQ(back[i].normalized_spatial, rs[i].normalized_spatial);
    }
    std::ostringstream a, b;
    write_pair_csv(a, rs);
    write_pair_csv(b, back);
    EXPECT_EQ(a.str(), b.str());
}

TEST(Report, PairCsvRejectsBadInput) {
    sema::testing::TempDir dir;
    std::ofstream(dir / "h.csv") << "image_id,wrong\n";
    EXPECT_THROW(read_pair_csv(dir / "h.csv"), DataError);
    std::ofstream(dir / "f.csv") << csv::row(pair_csv_header()) << "\nimg,a,b\n";
    EXPECT_THROW(read_pair_csv(dir / "f.csv"), DataError);
    EXPECT_THROW(read_pair_csv(dir / "absent.csv"), DataError);
}

TEST(Report, HeatmapColorsAndMissingCells) {
    EXPECT_EQ(svg_color(heatmap_color(1.0)), "#b2182b");
    EXPECT_EQ(svg_color(heatmap_color(-1.0)), "#2166ac");
    EXPECT_EQ(svg_color(heatmap_color(0.0)), "#ffffff");
    CorrelationMatrix m;
    m.condition = "patch96";
    m.cells[0][0] = {0.5, 10};
    const auto svg = heatmap_svg(m);
    EXPECT_NE(svg.find("Spearman rho (patch96)"), std::string::npos);
    EXPECT_NE(svg.find(">0.50<"), std::string::npos);
    EXPECT_NE(svg.find(svg_color(kMissingCell)), std::string::npos);
    EXPECT_NE(svg.find("\xE2\x80\x93"), std::string::npos);
    EXPECT_EQ(heatmap_svg(m), svg);
}

TEST(Report, CorrelationJsonHasNullForMissing) {
    CorrelationMatrix m;
    m.condition = "marker";
    m.cells[1][2] = {-0.25, 42};
    const auto j = to_json(m);
    EXPECT_EQ(j["rows"].size(), 4u);
    EXPECT_EQ(j["cols"].size(), 6u);
    EXPECT_EQ(j["cells"][1][2]["rho"], -0.25);
    EXPECT_EQ(j["cells"][1][2]["n_pairs"], 42);
    EXPECT_TRUE(j["cells"][0][0]["rho"].is_null());
}
