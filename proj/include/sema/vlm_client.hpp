#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sema/cache.hpp"
#include "sema/encoding.hpp"
#include "sema/error.hpp"
#include "sema/hash.hpp"
#include "sema/http.hpp"
#include "sema/prompts.hpp"

namespace sema {

struct VlmConfig {
    std::string endpoint_url;
    std::string model_id = "Qwen/Qwen3-VL-8B-Instruct";
    std::string api_key;
    double description_temperature = 0.2;
    double summary_temperature = 0.3;
    int max_retries = 3;
    double request_timeout_s = 120.0;
    int max_concurrent_requests = 4;
    double backoff_base_s = 1.0;
    double backoff_cap_s = 30.0;
    int description_max_tokens = 256;
    int summary_max_tokens = 1024;
    prompts::ListStyle list_style = prompts::ListStyle::numbered;
    /// Cache-only: a miss is an error instead of a request.
    bool offline = false;

    void validate() const {
        auto in_range = [](double t) { return t >= 0.0 && t <= 2.0; };
        if (!in_range(description_temperature) || !in_range(summary_temperature)) {
            throw ContractError("temperatures must lie in [0, 2]");
        }
        if (max_retries < 0) throw ContractError("max_retries must be >= 0");
        if (max_concurrent_requests < 1) throw ContractError("max_concurrent_requests must be >= 1");
        if (request_timeout_s <= 0.0) throw ContractError("request timeout must be positive");
        if (model_id.empty()) throw ContractError("model_id must not be empty");
    }
};

struct FixationDescription {
    std::string text;
    std::string condition;
    std::string image_id;
    std::string subject_id;
    std::size_t fixation_index = 0;
    std::string model_id;
    std::string prompt_hash;
    std::string cache_key;

    std::string text_hash() const { return sha256_hex(text); }
};

struct ScanpathSummary {
    std::string text;
    std::string condition;
    std::string image_id;
    std::string subject_id;
    std::string model_id;
    std::string prompt_hash;
    std::vector<std::string> source_description_hashes;
    std::string cache_key;
};

/// Key over everything that determines the model input, but not the
/// sampling temperature.
inline std::string cache_key(const std::string& condition, const std::string& image_id,
                             const std::string& subject_id, const std::string& slot,
                             const std::string& model_id, const std::string& prompt_hash,
                             const std::string& image_hash) {
    std::string material;
    for (const auto* part : {&condition, &image_id, &subject_id, &slot, &model_id, &prompt_hash, &image_hash}) {
        material += *part;
        material.push_back('\x1f');
    }
    return sha256_hex(material);
}

/// Client for an OpenAI-compatible chat-completions endpoint with a
/// persistent response cache. Shareable across threads.
class VlmClient {
  public:
    VlmClient(VlmConfig config, CacheStore cache)
        : config_(validated(std::move(config))), cache_(std::move(cache)),
          slots_(config_.max_concurrent_requests) {}

    const VlmConfig& config() const noexcept { return config_; }
    const CacheStore& cache() const noexcept { return cache_; }

    /// Network attempts made so far, retries included.
    std::size_t network_requests() const noexcept { return requests_.load(); }

    FixationDescription describe_patch(const EncodedFixation& enc) {
        if (!enc.condition.is_patch()) throw ContractError("describe_patch needs a patch encoding");
        return describe_with(enc, prompts::kPatch);
    }

    FixationDescription describe_marked(const EncodedFixation& enc) {
        if (enc.condition.is_patch()) throw ContractError("describe_marked needs a marker encoding");
        return describe_with(enc, prompts::kMarker);
    }

    FixationDescription describe(const EncodedFixation& enc) {
        return enc.condition.is_patch() ? describe_patch(enc) : describe_marked(enc);
    }

    /// Cache key the description of `enc` is stored under.
    std::string description_cache_key(const EncodedFixation& enc) const {
        return description_key(enc, sha256_hex(enc.condition.is_patch() ? prompts::kPatch : prompts::kMarker));
    }

    /// Looks up a description without querying; empty on a miss.
    std::optional<FixationDescription> cached_description(const EncodedFixation& enc) const {
        const auto prompt = enc.condition.is_patch() ? prompts::kPatch : prompts::kMarker;
        const auto key = description_key(enc, sha256_hex(prompt));
        if (auto record = cache_.get(key)) return description_from(*record, key);
        return std::nullopt;
    }

    /// Summarizes an ordered, single-scanpath description list together with
    /// the full stimulus image (PNG bytes).
    ScanpathSummary summarize_scanpath(std::span<const std::uint8_t> image_png,
                                       const std::vector<FixationDescription>& descriptions) {
        if (descriptions.empty()) throw ContractError("cannot summarize an empty description list");
        const auto& first = descriptions.front();
        std::vector<std::string> texts;
        std::vector<std::string> hashes;
        for (std::size_t i = 0; i < descriptions.size(); ++i) {
            const auto& d = descriptions[i];
            if (d.condition != first.condition || d.image_id != first.image_id ||
                d.subject_id != first.subject_id) {
                throw ContractError("descriptions passed to summarize_scanpath mix scanpaths");
            }
            if (i > 0 && d.fixation_index <= descriptions[i - 1].fixation_index) {
                throw ContractError("descriptions passed to summarize_scanpath are not in fixation order");
            }
            texts.push_back(d.text);
            hashes.push_back(d.text_hash());
        }
        const auto prompt = prompts::render_summary(texts, config_.list_style);
        const auto prompt_hash = sha256_hex(prompt);
        const auto key = cache_key(first.condition, first.image_id, first.subject_id, "summary",
                                   config_.model_id, prompt_hash, sha256_hex(image_png));
        ScanpathSummary summary;
        if (auto record = cache_.get(key)) {
            summary.text = record->at("text").get<std::string>();
        } else {
            if (config_.offline) {
                throw CacheMissError(key, "offline and no cached summary for " + first.condition + "/" +
                                              first.image_id + "/" + first.subject_id + " (key " + key + ")");
            }
            summary.text = complete(prompt, image_png, config_.summary_temperature,
                                    config_.summary_max_tokens,
                                    first.condition + "/" + first.image_id + "/" + first.subject_id + "/summary");
            cache_.put(key, {{"kind", "summary"},
                             {"key", key},
                             {"condition", first.condition},
                             {"image_id", first.image_id},
                             {"subject_id", first.subject_id},
                             {"slot", "summary"},
                             {"model_id", config_.model_id},
                             {"prompt_hash", prompt_hash},
                             {"image_hash", sha256_hex(image_png)},
                             {"source_description_hashes", hashes},
                             {"text", summary.text}});
        }
        summary.condition = first.condition;
        summary.image_id = first.image_id;
        summary.subject_id = first.subject_id;
        summary.model_id = config_.model_id;
        summary.prompt_hash = prompt_hash;
        summary.source_description_hashes = std::move(hashes);
        summary.cache_key = key;
        return summary;
    }

    /// One chat completion with the image attached inline; retries per config.
    std::string complete(std::string_view prompt, std::span<const std::uint8_t> image_png,
                         double temperature, int max_tokens, const std::string& provenance) {
        nlohmann::json body{
            {"model", config_.model_id},
            {"messages",
             {{{"role", "user"},
               {"content",
                {{{"type", "text"}, {"text", std::string(prompt)}},
                 {{"type", "image_url"},
                  {"image_url", {{"url", "data:image/png;base64," + base64_encode(image_png)}}}}}}}}},
            {"temperature", temperature},
            {"max_tokens", max_tokens}};
        httplib::Headers headers;
        if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
        const RetryPolicy policy{config_.max_retries, config_.request_timeout_s, config_.backoff_base_s,
                                 config_.backoff_cap_s};

        slots_.acquire();
        HttpReply reply;
        try {
            reply = post_json(Endpoint::parse(config_.endpoint_url), "/v1/chat/completions", body,
                              policy, headers, [this] { ++requests_; });
        } catch (const TransportError& e) {
            slots_.release();
            throw TransportError(provenance + ": " + e.what());
        } catch (...) {
            slots_.release();
            throw;
        }
        slots_.release();

        if (reply.status != 200) {
            throw TransportError(provenance + ": HTTP " + std::to_string(reply.status) + ": " +
                                 reply.body.substr(0, 200));
        }
        auto text = extract_content(reply.body);
        if (trim(text).empty()) throw DegenerateResponseError(provenance + ": empty model response");
        return text;
    }

  private:
    static VlmConfig validated(VlmConfig config) {
        config.validate();
        return config;
    }

    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    static std::string extract_content(const std::string& body) {
        nlohmann::json reply;
        try {
            reply = nlohmann::json::parse(body);
        } catch (const nlohmann::json::parse_error&) {
            throw DegenerateResponseError("model response is not JSON");
        }
        const auto choices = reply.find("choices");
        if (choices == reply.end() || !choices->is_array() || choices->empty()) {
            throw DegenerateResponseError("model response has no choices");
        }
        const auto& message = (*choices)[0].value("message", nlohmann::json::object());
        const auto content = message.find("content");
        if (content == message.end() || content->is_null()) return {};
        if (content->is_string()) return content->get<std::string>();
        std::string text;
        if (content->is_array()) {
            for (const auto& part : *content) {
                if (part.value("type", "") == "text") text += part.value("text", "");
            }
        }
        return text;
    }

    std::string description_key(const EncodedFixation& enc, const std::string& prompt_hash) const {
        const auto& p = enc.provenance;
        return cache_key(enc.condition.name(), p.image_id, p.subject_id, std::to_string(p.fixation_index),
                         config_.model_id, prompt_hash, sha256_hex(enc.png));
    }

    FixationDescription description_from(const nlohmann::json& record, const std::string& key) const {
        FixationDescription d;
        d.text = record.at("text").get<std::string>();
        d.condition = record.at("condition").get<std::string>();
        d.image_id = record.at("image_id").get<std::string>();
        d.subject_id = record.at("subject_id").get<std::string>();
        d.fixation_index = record.at("fixation_index").get<std::size_t>();
        d.model_id = record.at("model_id").get<std::string>();
        d.prompt_hash = record.at("prompt_hash").get<std::string>();
        d.cache_key = key;
        return d;
    }

    FixationDescription describe_with(const EncodedFixation& enc, std::string_view prompt) {
        const auto prompt_hash = sha256_hex(prompt);
        const auto key = description_key(enc, prompt_hash);
        if (auto record = cache_.get(key)) return description_from(*record, key);

        const auto& p = enc.provenance;
        const auto where = enc.condition.name() + "/" + p.image_id + "/" + p.subject_id + "/" +
                           std::to_string(p.fixation_index);
        if (config_.offline) {
            throw CacheMissError(key, "offline and no cached description for " + where + " (key " + key + ")");
        }
        FixationDescription d;
        d.text = complete(prompt, enc.png, config_.description_temperature, config_.description_max_tokens,
                          where);
        d.condition = enc.condition.name();
        d.image_id = p.image_id;
        d.subject_id = p.subject_id;
        d.fixation_index = p.fixation_index;
        d.model_id = config_.model_id;
        d.prompt_hash = prompt_hash;
        d.cache_key = key;
        cache_.put(key, {{"kind", "description"},
                         {"key", key},
                         {"condition", d.condition},
                         {"image_id", d.image_id},
                         {"subject_id", d.subject_id},
                         {"slot", std::to_string(d.fixation_index)},
                         {"fixation_index", d.fixation_index},
                         {"model_id", d.model_id},
                         {"prompt_hash", prompt_hash},
                         {"image_hash", sha256_hex(enc.png)},
                         {"text", d.text}});
        return d;
    }

    VlmConfig config_;
    CacheStore cache_;
    std::counting_semaphore<1024> slots_;
    std::atomic<std::size_t> requests_{0};
};

}  // namespace sema
