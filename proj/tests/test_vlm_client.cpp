#include <future>

#include <gtest/gtest.h>

#include "mock_vlm.hpp"
#include "sema/embedding_remote.hpp"
#include "sema/encoding.hpp"
#include "sema/vlm_client.hpp"
#include "temp_dir.hpp"

using namespace sema;
using sema::testing::MockVlm;
using sema::testing::TempDir;

namespace {

struct Fixture {
    Raster image{160, 120, Rgb{10, 20, 30}};
    StimulusRecord record{"im", "im.png", 160, 120,
                          {{"s1", {{0.1, 0.1, 100}, {0.5, 0.5, 100}, {0.9, 0.8, 100}}},
                           {"s2", {{0.3, 0.3, 100}}}}};

    EncodedFixation enc(std::size_t subject, std::size_t index, EncodingCondition c = EncodingCondition::patch(96)) const {
        return encode_fixation(image, record, record.scanpaths[subject], index, c);
    }
};

VlmConfig config_for(const MockVlm& mock) {
    VlmConfig c;
    c.endpoint_url = mock.url();
    c.backoff_base_s = 0.001;
    c.backoff_cap_s = 0.01;
    c.request_timeout_s = 10;
    return c;
}

}  // namespace

TEST(VlmClient, WireFormatAndAuthorization) {
    MockVlm mock;
    TempDir dir;
    auto cfg = config_for(mock);
    cfg.api_key = "secret-token";
    VlmClient client(cfg, CacheStore(dir / "cache"));
    Fixture f;
    const auto e = f.enc(0, 1);
    const auto d = client.describe(e);
    EXPECT_FALSE(d.text.empty());
    EXPECT_EQ(d.fixation_index, 1u);
    EXPECT_EQ(d.prompt_hash, sha256_hex(prompts::kPatch));
    EXPECT_EQ(d.cache_key, client.description_cache_key(e));
    EXPECT_EQ(mock.last_authorization(), "Bearer secret-token");
    const auto body = mock.last_body();
    EXPECT_EQ(body["model"], cfg.model_id);
    EXPECT_DOUBLE_EQ(body["temperature"].get<double>(), 0.2);
    const auto& content = body["messages"][0]["content"];
    EXPECT_EQ(content[0]["text"], std::string(prompts::kPatch));
    const auto url = content[1]["image_url"]["url"].get<std::string>();
    ASSERT_EQ(url.rfind("data:image/png;base64,", 0), 0u);
    EXPECT_EQ(base64_decode(url.substr(22)), e.png);

    const auto m = client.describe(f.enc(0, 0, EncodingCondition::marker()));
    EXPECT_EQ(mock.last_body()["messages"][0]["content"][0]["text"], std::string(prompts::kMarker));
    EXPECT_THROW(client.describe_patch(f.enc(0, 0, EncodingCondition::marker())), ContractError);
    EXPECT_THROW(client.describe_marked(e), ContractError);

    const auto png = encode_png(f.image);
    const auto s = client.summarize_scanpath(png, {d});
    EXPECT_DOUBLE_EQ(mock.last_body()["temperature"].get<double>(), 0.3);
    EXPECT_EQ(mock.last_body()["messages"][0]["content"][0]["text"],
              prompts::render_summary({d.text}, prompts::ListStyle::numbered));
    EXPECT_EQ(s.source_description_hashes, (std::vector<std::string>{sha256_hex(d.text)}));
    EXPECT_FALSE(s.text.empty());
    (void)m;
}

TEST(VlmClient, CacheHitMakesNoRequest) {
    MockVlm mock;
    TempDir dir;
    Fixture f;
    VlmClient client(config_for(mock), CacheStore(dir / "cache"));
    const auto first = client.describe(f.enc(0, 2));
    EXPECT_EQ(mock.requests(), 1u);
    EXPECT_EQ(client.network_requests(), 1u);
    VlmClient again(config_for(mock), CacheStore(dir / "cache"));
    const auto second = again.describe(f.enc(0, 2));
    EXPECT_EQ(second.text, first.text);
    EXPECT_EQ(mock.requests(), 1u);
    EXPECT_EQ(again.network_requests(), 0u);
    EXPECT_TRUE(again.cached_description(f.enc(0, 2)).has_value());
    EXPECT_FALSE(again.cached_description(f.enc(0, 1)).has_value());
    EXPECT_TRUE(std::filesystem::exists(CacheStore(dir / "cache").path_for(first.cache_key)));
}

TEST(VlmClient, KeyDependsOnInputButNotTemperature) {
    MockVlm mock;
    TempDir dir;
    Fixture f;
    auto cfg = config_for(mock);
    VlmClient a(cfg, CacheStore(dir / "c"));
    cfg.description_temperature = 1.0;
    VlmClient b(cfg, CacheStore(dir / "c"));
    EXPECT_EQ(a.description_cache_key(f.enc(0, 0)), b.description_cache_key(f.enc(0, 0)));
    EXPECT_NE(a.description_cache_key(f.enc(0, 0)), a.description_cache_key(f.enc(0, 1)));
    EXPECT_NE(a.description_cache_key(f.enc(0, 0)),
              a.description_cache_key(f.enc(0, 0, EncodingCondition::patch(192))));
    cfg.model_id = "other-model";
    VlmClient c(cfg, CacheStore(dir / "c"));
    EXPECT_NE(a.description_cache_key(f.enc(0, 0)), c.description_cache_key(f.enc(0, 0)));
}

TEST(VlmClient, RetriesTransientFailures) {
    MockVlm mock({.fail_first = 2});
    TempDir dir;
    Fixture f;
    VlmClient client(config_for(mock), CacheStore(dir / "cache"));
    EXPECT_NO_THROW(client.describe(f.enc(0, 0)));
    EXPECT_EQ(mock.requests(), 3u);
    EXPECT_EQ(client.network_requests(), 3u);
}

TEST(VlmClient, GivesUpAfterMaxRetries) {
    MockVlm mock({.always_fail = true});
    TempDir dir;
    Fixture f;
    auto cfg = config_for(mock);
    cfg.max_retries = 2;
    VlmClient client(cfg, CacheStore(dir / "cache"));
    try {
        client.describe(f.enc(1, 0));
        FAIL() << "expected TransportError";
    } catch (const TransportError& e) {
        EXPECT_NE(std::string(e.what()).find("patch96/im/s2/0"), std::string::npos) << e.what();
    }
    EXPECT_EQ(mock.requests(), 3u);
    EXPECT_FALSE(client.cached_description(f.enc(1, 0)).has_value());
}

TEST(VlmClient, UnreachableEndpointIsTransportError) {
    TempDir dir;
    Fixture f;
    VlmConfig cfg;
    cfg.endpoint_url = "http://127.0.0.1:1";
    cfg.max_retries = 1;
    cfg.backoff_base_s = 0.001;
    cfg.request_timeout_s = 2;
    VlmClient client(cfg, CacheStore(dir / "cache"));
    EXPECT_THROW(client.describe(f.enc(0, 0)), TransportError);
}

TEST(VlmClient, EmptyContentIsDegenerate) {
    MockVlm mock({.empty_content = true});
    TempDir dir;
    Fixture f;
    VlmClient client(config_for(mock), CacheStore(dir / "cache"));
    EXPECT_THROW(client.describe(f.enc(0, 0)), DegenerateResponseError);
    EXPECT_FALSE(client.cached_description(f.enc(0, 0)).has_value());
}

TEST(VlmClient, OfflineMissNamesKey) {
    TempDir dir;
    Fixture f;
    VlmConfig cfg;
    cfg.offline = true;
    VlmClient client(cfg, CacheStore(dir / "cache"));
    const auto e = f.enc(0, 0);
    try {
        client.describe(e);
        FAIL() << "expected CacheMissError";
    } catch (const CacheMissError& err) {
        EXPECT_EQ(err.key(), client.description_cache_key(e));
        EXPECT_NE(std::string(err.what()).find(err.key()), std::string::npos);
    }
}

TEST(VlmClient, ConcurrencyIsBounded) {
    MockVlm mock({.delay = std::chrono::milliseconds(60)});
    TempDir dir;
    Fixture f;
    auto cfg = config_for(mock);
    cfg.max_concurrent_requests = 2;
    VlmClient client(cfg, CacheStore(dir / "cache"));
    std::vector<std::future<FixationDescription>> jobs;
    for (std::size_t i = 0; i < 3; ++i) {
        for (auto c : EncodingCondition::standard()) {
            const auto e = f.enc(0, i, c);
            jobs.push_back(std::async(std::launch::async, [&client, e] { return client.describe(e); }));
        }
    }
    for (auto& j : jobs) j.get();
    EXPECT_EQ(mock.requests(), 12u);
    EXPECT_LE(mock.max_in_flight(), 2u);
    EXPECT_GE(mock.max_in_flight(), 1u);
}

TEST(VlmClient, SummaryInputContract) {
    TempDir dir;
    Fixture f;
    VlmConfig cfg;
    cfg.offline = true;
    VlmClient client(cfg, CacheStore(dir / "cache"));
    const auto png = encode_png(f.image);
    FixationDescription a{"a", "patch96", "im", "s1", 0, "m", "h", "k"};
    FixationDescription b{"b", "patch96", "im", "s1", 1, "m", "h", "k"};
    FixationDescription other = b;
    other.subject_id = "s2";
    EXPECT_THROW(client.summarize_scanpath(png, {}), ContractError);
    EXPECT_THROW(client.summarize_scanpath(png, {a, other}), ContractError);
    EXPECT_THROW(client.summarize_scanpath(png, {b, a}), ContractError);
    EXPECT_THROW(client.summarize_scanpath(png, {a, b}), CacheMissError);
}

TEST(VlmClient, ConfigValidation) {
    VlmConfig cfg;
    cfg.description_temperature = 3;
    EXPECT_THROW(cfg.validate(), ContractError);
    cfg = {};
    cfg.max_concurrent_requests = 0;
    EXPECT_THROW(cfg.validate(), ContractError);
    EXPECT_THROW(Endpoint::parse("localhost:8000"), ContractError);
    EXPECT_THROW(Endpoint::parse("ftp://host"), ContractError);
    const auto e = Endpoint::parse("http://host:9/api/");
    EXPECT_EQ(e.origin, "http://host:9");
    EXPECT_EQ(e.path("/embed"), "/api/embed");
}

TEST(RemoteEmbedding, UnitVectorsPerToken) {
    MockVlm mock;
    RemoteEmbeddingBackend backend(mock.url(), "bert-base-uncased", {1, 5.0, 0.001, 0.01});
    const TokenSequence tokens{"red", "boat", "red"};
    const auto v = backend.embed(tokens);
    ASSERT_EQ(v.size(), 3u);
    EXPECT_EQ(backend.dimension(), 8u);
    EXPECT_NEAR(norm(v[0]), 1.0, 1e-12);
    EXPECT_NEAR(dot(v[0], v[2]), 1.0, 1e-12);
    EXPECT_LT(dot(v[0], v[1]), 0.999);
    const auto s = embed_score(TokenSequence{"red", "boat"}, TokenSequence{"boat", "red"}, backend);
    EXPECT_NEAR(s.f1, 1.0, 1e-12);
    EXPECT_TRUE(backend.embed({}).empty());
}
