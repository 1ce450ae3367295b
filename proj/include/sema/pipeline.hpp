#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sema/analysis.hpp"
#include "sema/cache.hpp"
#include "sema/embedding_remote.hpp"
#include "sema/encoding.hpp"
#include "sema/error.hpp"
#include "sema/gaze_data.hpp"
#include "sema/image.hpp"
#include "sema/log.hpp"
#include "sema/report.hpp"
#include "sema/semantic_metrics.hpp"
#include "sema/spatial_metrics.hpp"
#include "sema/text.hpp"
#include "sema/vlm_client.hpp"

namespace sema {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Run configuration

struct EmbeddingConfig {
    /// Empty selects the orthogonal stub.
    std::string endpoint;
    std::string model = "bert-base-uncased";
    /// IDF token weights computed over the condition's summaries.
    bool idf = false;
    std::optional<double> baseline;
};

struct RunConfig {
    fs::path manifest;
    std::vector<std::string> conditions{"patch96", "patch192", "patch256", "marker"};
    VlmConfig vlm;
    EmbeddingConfig embedding;
    SpatialParams spatial;
    NormScope norm_scope = NormScope::condition;
    fs::path out_dir = "sema-out";
    fs::path cache_dir = ".sema-cache";
    std::optional<fs::path> dump_encodings;
    CoordinateUnits units = CoordinateUnits::normalized;
    std::uint64_t seed = 0;
    std::size_t top_k = 50;
    std::vector<std::string> blur_lexicon = default_blur_lexicon();
    /// Threads for CPU stages; 0 means one per hardware thread.
    unsigned compute_workers = 0;

    std::vector<EncodingCondition> encoding_conditions() const {
        std::vector<EncodingCondition> out;
        for (const auto& c : conditions) out.push_back(EncodingCondition::from_name(c));
        return out;
    }

    unsigned workers() const {
        if (compute_workers > 0) return compute_workers;
        return std::max(1u, std::thread::hardware_concurrency());
    }

    void validate() const {
        if (manifest.empty()) throw ContractError("no manifest given");
        if (conditions.empty()) throw ContractError("no conditions selected");
        std::vector<std::string> seen;
        for (const auto& c : conditions) {
            EncodingCondition::from_name(c);
            if (std::find(seen.begin(), seen.end(), c) != seen.end()) {
                throw ContractError("condition listed twice: " + c);
            }
            seen.push_back(c);
        }
        vlm.validate();
        spatial.grid.validate();
        if (spatial.tde.m < 1 || spatial.tde.delay < 1) throw ContractError("TDE m and delay must be >= 1");
        if (spatial.scanmatch.max_sub <= 0.0) throw ContractError("ScanMatch max substitution must be positive");
        if (out_dir.empty()) throw ContractError("no output directory given");
        if (embedding.baseline && !(*embedding.baseline < 1.0)) throw ContractError("embedding baseline must be below 1");
    }
};

inline std::string grid_string(const GridSpec& g) { return std::to_string(g.cols) + "x" + std::to_string(g.rows); }

inline GridSpec parse_grid(const std::string& text) {
    const auto x = text.find_first_of("xX");
    GridSpec g;
    try {
        if (x == std::string::npos) throw std::invalid_argument(text);
        std::size_t used = 0;
        g.cols = std::stoi(text.substr(0, x), &used);
        if (used != x) throw std::invalid_argument(text);
        const auto rest = text.substr(x + 1);
        g.rows = std::stoi(rest, &used);
        if (used != rest.size()) throw std::invalid_argument(text);
    } catch (const std::exception&) {
        throw ContractError("grid must look like COLSxROWS, got '" + text + "'");
    }
    g.validate();
    return g;
}

inline std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    for (char c : text + ",") {
        if (c == ',') {
            if (!item.empty()) out.push_back(item);
            item.clear();
        } else if (c != ' ') {
            item += c;
        }
    }
    return out;
}

inline NormScope parse_norm_scope(const std::string& s) {
    if (s == "condition") return NormScope::condition;
    if (s == "image") return NormScope::image;
    throw ContractError("norm scope must be 'condition' or 'image', got '" + s + "'");
}

inline CoordinateUnits parse_units(const std::string& s) {
    if (s == "normalized") return CoordinateUnits::normalized;
    if (s == "pixels") return CoordinateUnits::pixels;
    throw ContractError("coordinate units must be 'normalized' or 'pixels', got '" + s + "'");
}

/// Flag-shaped JSON; the API key is never written out.
inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j{
        {"manifest", c.manifest.generic_string()},
        {"conditions", c.conditions},
        {"out", c.out_dir.generic_string()},
        {"cache_dir", c.cache_dir.generic_string()},
        {"vlm_endpoint", c.vlm.endpoint_url},
        {"model", c.vlm.model_id},
        {"description_temperature", c.vlm.description_temperature},
        {"summary_temperature", c.vlm.summary_temperature},
        {"max_retries", c.vlm.max_retries},
        {"request_timeout", c.vlm.request_timeout_s},
        {"max_concurrent", c.vlm.max_concurrent_requests},
        {"list_style", c.vlm.list_style == prompts::ListStyle::numbered ? "numbered" : "plain"},
        {"offline", c.vlm.offline},
        {"embed_endpoint", c.embedding.endpoint},
        {"embed_model", c.embedding.model},
        {"embed_idf", c.embedding.idf},
        {"grid", grid_string(c.spatial.grid)},
        {"tde_m", c.spatial.tde.m},
        {"tde_delay", c.spatial.tde.delay},
        {"scanmatch_gap", c.spatial.scanmatch.gap_penalty},
        {"scanmatch_maxsub", c.spatial.scanmatch.max_sub},
        {"norm_scope", c.norm_scope == NormScope::condition ? "condition" : "image"},
        {"coords", c.units == CoordinateUnits::normalized ? "normalized" : "pixels"},
        {"seed", c.seed},
        {"top_k", c.top_k},
        {"blur_lexicon", c.blur_lexicon},
        {"workers", c.compute_workers}};
    j["embed_baseline"] = c.embedding.baseline ? nlohmann::json(*c.embedding.baseline) : nlohmann::json();
    j["dump_encodings"] = c.dump_encodings ? nlohmann::json(c.dump_encodings->generic_string()) : nlohmann::json();
    return j;
}

/// Overlays keys from a config file onto `c`. Unknown keys are rejected.
inline void apply_config_json(RunConfig& c, const nlohmann::json& j) {
    if (!j.is_object()) throw ContractError("config file must hold a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "manifest") c.manifest = v.get<std::string>();
            else if (key == "conditions") c.conditions = v.is_string() ? split_list(v.get<std::string>())
                                                                       : v.get<std::vector<std::string>>();
            else if (key == "out") c.out_dir = v.get<std::string>();
            else if (key == "cache_dir") c.cache_dir = v.get<std::string>();
            else if (key == "vlm_endpoint") c.vlm.endpoint_url = v.get<std::string>();
            else if (key == "model") c.vlm.model_id = v.get<std::string>();
            else if (key == "description_temperature") c.vlm.description_temperature = v.get<double>();
            else if (key == "summary_temperature") c.vlm.summary_temperature = v.get<double>();
            else if (key == "max_retries") c.vlm.max_retries = v.get<int>();
            else if (key == "request_timeout") c.vlm.request_timeout_s = v.get<double>();
            else if (key == "max_concurrent") c.vlm.max_concurrent_requests = v.get<int>();
            else if (key == "list_style") {
                const auto s = v.get<std::string>();
                if (s != "numbered" && s != "plain") throw ContractError("list_style must be numbered or plain");
                c.vlm.list_style = s == "numbered" ? prompts::ListStyle::numbered : prompts::ListStyle::plain;
            } else if (key == "offline") c.vlm.offline = v.get<bool>();
            else if (key == "embed_endpoint") c.embedding.endpoint = v.get<std::string>();
            else if (key == "embed_model") c.embedding.model = v.get<std::string>();
            else if (key == "embed_idf") c.embedding.idf = v.get<bool>();
            else if (key == "embed_baseline") {
                if (v.is_null()) c.embedding.baseline.reset();
                else c.embedding.baseline = v.get<double>();
            }
            else if (key == "grid") c.spatial.grid = parse_grid(v.get<std::string>());
            else if (key == "tde_m") c.spatial.tde.m = v.get<int>();
            else if (key == "tde_delay") c.spatial.tde.delay = v.get<int>();
            else if (key == "scanmatch_gap") c.spatial.scanmatch.gap_penalty = v.get<double>();
            else if (key == "scanmatch_maxsub") c.spatial.scanmatch.max_sub = v.get<double>();
            else if (key == "norm_scope") c.norm_scope = parse_norm_scope(v.get<std::string>());
            else if (key == "coords") c.units = parse_units(v.get<std::string>());
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "top_k") c.top_k = v.get<std::size_t>();
            else if (key == "blur_lexicon") c.blur_lexicon = v.is_string() ? split_list(v.get<std::string>())
                                                                           : v.get<std::vector<std::string>>();
            else if (key == "workers") c.compute_workers = v.get<unsigned>();
            else if (key == "dump_encodings") {
                if (v.is_null()) c.dump_encodings.reset();
                else c.dump_encodings = fs::path(v.get<std::string>());
            } else throw ContractError("unknown config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ContractError(std::string("bad config value: ") + e.what());
    }
}

inline RunConfig load_config_file(const fs::path& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw ContractError("config file not found: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ContractError(path.string() + ": " + e.what());
    }
    apply_config_json(base, j);
    return base;
}

// ---------------------------------------------------------------------------
// Stage plumbing

struct StageReport {
    StageReport() = default;
    explicit StageReport(std::string name, std::size_t total = 0) : stage(std::move(name)), items(total) {}

    std::string stage;
    std::size_t items = 0;
    std::size_t completed = 0;
    std::vector<std::string> failures;
    std::size_t network_requests = 0;

    int exit_code() const { return failures.empty() ? 0 : 1; }
};

/// Runs fn(0..n-1) on up to `workers` threads; the first exception is
/// rethrown after all threads finish.
template <class F>
void parallel_for(std::size_t n, unsigned workers, F&& fn) {
    if (n == 0) return;
    workers = static_cast<unsigned>(std::clamp<std::size_t>(workers, 1, n));
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto body = [&] {
        for (std::size_t i; (i = next++) < n;) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next = n;
            }
        }
    };
    if (workers == 1) {
        body();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body);
    }
    if (error) std::rethrow_exception(error);
}

/// Rate-limited progress lines.
class Progress {
  public:
    Progress(std::ostream& out, std::string label, std::size_t total)
        : out_(out), label_(std::move(label)), total_(total), last_(std::chrono::steady_clock::now()) {}

    void tick() {
        const auto done = ++done_;
        std::lock_guard lock(mutex_);
        const auto now = std::chrono::steady_clock::now();
        if (done == total_ || now - last_ > std::chrono::seconds(2)) {
            out_ << label_ << ": " << done << "/" << total_ << '\n' << std::flush;
            last_ = now;
        }
    }

  private:
    std::ostream& out_;
    std::string label_;
    std::size_t total_;
    std::atomic<std::size_t> done_{0};
    std::mutex mutex_;
    std::chrono::steady_clock::time_point last_;
};

inline std::string safe_component(const std::string& id) {
    std::string out;
    for (unsigned char c : id) out += (std::isalnum(c) || c == '-' || c == '_' || c == '.') ? static_cast<char>(c) : '_';
    return out.empty() ? "_" : out;
}

inline fs::path descriptions_path(const RunConfig& c, const std::string& cond) {
    return c.out_dir / ("descriptions_" + cond + ".json");
}
inline fs::path summaries_path(const RunConfig& c, const std::string& cond) {
    return c.out_dir / ("summaries_" + cond + ".json");
}
inline fs::path pairs_path(const RunConfig& c, const std::string& cond) {
    return c.out_dir / ("pairs_" + cond + ".csv");
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write " + path.string());
        out << j.dump(2) << '\n';
    }
    fs::rename(tmp, path);
}

inline nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path.string() + " not found");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

/// Creates the output directory and stores the run configuration in it.
inline void prepare_output(const RunConfig& c) {
    c.validate();
    fs::create_directories(c.out_dir);
    write_json(c.out_dir / "run_config.json", to_json(c));
}

inline std::vector<StimulusRecord> load_dataset(const RunConfig& c) {
    return parse_dataset(c.manifest, ParseOptions{c.units, true});
}

inline void print_summary(std::ostream& log, const StageReport& r) {
    log << r.stage << ": " << r.completed << "/" << r.items << " done, " << r.failures.size() << " failed, "
        << r.network_requests << " network requests\n";
    constexpr std::size_t kShown = 50;
    for (std::size_t i = 0; i < r.failures.size() && i < kShown; ++i) log << "  " << r.failures[i] << '\n';
    if (r.failures.size() > kShown) log << "  ... " << r.failures.size() - kShown << " more\n";
    log << std::flush;
}

// ---------------------------------------------------------------------------
// describe

inline nlohmann::json to_json(const FixationDescription& d) {
    return {{"image_id", d.image_id},       {"subject_id", d.subject_id}, {"fixation_index", d.fixation_index},
            {"text", d.text},               {"cache_key", d.cache_key},   {"prompt_hash", d.prompt_hash},
            {"model_id", d.model_id}};
}

inline FixationDescription description_from_json(const nlohmann::json& j, const std::string& condition) {
    FixationDescription d;
    d.condition = condition;
    d.image_id = j.at("image_id").get<std::string>();
    d.subject_id = j.at("subject_id").get<std::string>();
    d.fixation_index = j.at("fixation_index").get<std::size_t>();
    d.text = j.at("text").get<std::string>();
    d.cache_key = j.at("cache_key").get<std::string>();
    d.prompt_hash = j.at("prompt_hash").get<std::string>();
    d.model_id = j.at("model_id").get<std::string>();
    return d;
}

inline std::vector<FixationDescription> read_descriptions(const RunConfig& c, const std::string& cond) {
    const auto j = read_json(descriptions_path(c, cond));
    std::vector<FixationDescription> out;
    try {
        for (const auto& d : j.at("descriptions")) out.push_back(description_from_json(d, cond));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(descriptions_path(c, cond).string() + ": " + e.what());
    }
    return out;
}

inline StageReport cmd_describe(const RunConfig& config, std::ostream& log) {
    prepare_output(config);
    const auto records = load_dataset(config);
    const auto conditions = config.encoding_conditions();
    VlmClient client(config.vlm, CacheStore(config.cache_dir));

    struct Item {
        std::size_t cond, scanpath, fixation;
    };
    std::size_t total = 0;
    for (const auto& r : records) {
        for (const auto& s : r.scanpaths) total += s.size() * conditions.size();
    }

    StageReport report{"describe", total};
    std::vector<std::vector<FixationDescription>> results(conditions.size());
    std::mutex mutex;
    Progress progress(log, "describe", total);

    for (const auto& record : records) {
        std::vector<Item> items;
        for (std::size_t c = 0; c < conditions.size(); ++c) {
            for (std::size_t s = 0; s < record.scanpaths.size(); ++s) {
                for (std::size_t t = 0; t < record.scanpaths[s].size(); ++t) items.push_back({c, s, t});
            }
        }
        Raster image;
        try {
            image = read_image(record.image_path);
        } catch (const Error& e) {
            std::lock_guard lock(mutex);
            for (const auto& it : items) {
                report.failures.push_back(conditions[it.cond].name() + "/" + record.image_id + "/" +
                                          record.scanpaths[it.scanpath].subject_id + "/" +
                                          std::to_string(it.fixation) + ": " + e.what());
                progress.tick();
            }
            continue;
        }
        parallel_for(items.size(), static_cast<unsigned>(config.vlm.max_concurrent_requests), [&](std::size_t i) {
            const auto& it = items[i];
            const auto& cond = conditions[it.cond];
            const auto& scanpath = record.scanpaths[it.scanpath];
            const auto where = cond.name() + "/" + record.image_id + "/" + scanpath.subject_id + "/" +
                               std::to_string(it.fixation);
            try {
                const auto enc = encode_fixation(image, record, scanpath, it.fixation, cond);
                if (config.dump_encodings) {
                    const auto dir = *config.dump_encodings / cond.name() / safe_component(record.image_id);
                    fs::create_directories(dir);
                    std::ofstream(dir / (safe_component(scanpath.subject_id) + "_" + std::to_string(it.fixation) +
                                         ".png"),
                                  std::ios::binary)
                        .write(reinterpret_cast<const char*>(enc.png.data()),
                               static_cast<std::streamsize>(enc.png.size()));
                }
                try {
                    auto d = client.describe(enc);
                    std::lock_guard lock(mutex);
                    results[it.cond].push_back(std::move(d));
                    ++report.completed;
                } catch (const CacheMissError& e) {
                    std::lock_guard lock(mutex);
                    report.failures.push_back(where + ": " + e.what());
                } catch (const Error& e) {
                    std::lock_guard lock(mutex);
                    report.failures.push_back(where + " [key " + client.description_cache_key(enc) + "]: " + e.what());
                }
            } catch (const Error& e) {
                std::lock_guard lock(mutex);
                report.failures.push_back(where + ": " + e.what());
            }
            progress.tick();
        });
    }

    for (std::size_t c = 0; c < conditions.size(); ++c) {
        auto& list = results[c];
        std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) {
            return std::tie(a.image_id, a.subject_id, a.fixation_index) <
                   std::tie(b.image_id, b.subject_id, b.fixation_index);
        });
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& d : list) rows.push_back(to_json(d));
        write_json(descriptions_path(config, conditions[c].name()),
                   {{"condition", conditions[c].name()}, {"model_id", config.vlm.model_id}, {"descriptions", rows}});
    }
    std::sort(report.failures.begin(), report.failures.end());
    report.network_requests = client.network_requests();
    print_summary(log, report);
    return report;
}

// ---------------------------------------------------------------------------
// summarize

inline nlohmann::json to_json(const ScanpathSummary& s) {
    return {{"image_id", s.image_id},
            {"subject_id", s.subject_id},
            {"text", s.text},
            {"cache_key", s.cache_key},
            {"prompt_hash", s.prompt_hash},
            {"model_id", s.model_id},
            {"source_description_hashes", s.source_description_hashes}};
}

/// (image_id, subject_id) -> summary text.
using SummaryTable = std::map<std::pair<std::string, std::string>, std::string>;

inline SummaryTable read_summaries(const RunConfig& c, const std::string& cond) {
    const auto path = summaries_path(c, cond);
    const auto j = read_json(path);
    SummaryTable out;
    try {
        for (const auto& s : j.at("summaries")) {
            out[{s.at("image_id").get<std::string>(), s.at("subject_id").get<std::string>()}] =
                s.at("text").get<std::string>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return out;
}

inline StageReport cmd_summarize(const RunConfig& config, std::ostream& log) {
    prepare_output(config);
    const auto records = load_dataset(config);
    const auto conditions = config.encoding_conditions();
    VlmClient client(config.vlm, CacheStore(config.cache_dir));

    StageReport report{"summarize", total_scanpaths(records) * conditions.size()};
    std::mutex mutex;
    Progress progress(log, "summarize", report.items);

    // condition -> (image, subject) -> fixation index -> description
    std::vector<std::map<std::pair<std::string, std::string>, std::map<std::size_t, FixationDescription>>> described(
        conditions.size());
    std::vector<bool> available(conditions.size(), true);
    for (std::size_t c = 0; c < conditions.size(); ++c) {
        try {
            for (auto& d : read_descriptions(config, conditions[c].name())) {
                auto& slot = described[c][{d.image_id, d.subject_id}];
                const auto index = d.fixation_index;
                slot.emplace(index, std::move(d));
            }
        } catch (const DataError& e) {
            available[c] = false;
            report.failures.push_back(conditions[c].name() + ": " + e.what() + " (run describe first)");
        }
    }
    std::vector<std::vector<ScanpathSummary>> results(conditions.size());

    for (const auto& record : records) {
        std::vector<std::pair<std::size_t, std::size_t>> items;
        for (std::size_t c = 0; c < conditions.size(); ++c) {
            if (!available[c]) continue;
            for (std::size_t s = 0; s < record.scanpaths.size(); ++s) items.emplace_back(c, s);
        }
        if (items.empty()) continue;
        std::vector<std::uint8_t> png;
        try {
            png = encode_png(read_image(record.image_path));
        } catch (const Error& e) {
            for (const auto& [c, s] : items) {
                report.failures.push_back(conditions[c].name() + "/" + record.image_id + "/" +
                                          record.scanpaths[s].subject_id + ": " + e.what());
                progress.tick();
            }
            continue;
        }
        parallel_for(items.size(), static_cast<unsigned>(config.vlm.max_concurrent_requests), [&](std::size_t i) {
            const auto [c, s] = items[i];
            const auto& scanpath = record.scanpaths[s];
            const auto where = conditions[c].name() + "/" + record.image_id + "/" + scanpath.subject_id;
            try {
                std::vector<FixationDescription> list;
                const auto found = described[c].find({record.image_id, scanpath.subject_id});
                for (std::size_t t = 0; t < scanpath.size(); ++t) {
                    if (found == described[c].end() || !found->second.count(t)) {
                        throw DataError("missing description for fixation " + std::to_string(t));
                    }
                    list.push_back(found->second.at(t));
                }
                auto summary = client.summarize_scanpath(png, list);
                std::lock_guard lock(mutex);
                results[c].push_back(std::move(summary));
                ++report.completed;
            } catch (const Error& e) {
                std::lock_guard lock(mutex);
                report.failures.push_back(where + ": " + e.what());
            }
            progress.tick();
        });
    }

    for (std::size_t c = 0; c < conditions.size(); ++c) {
        if (!available[c]) continue;
        auto& list = results[c];
        std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) {
            return std::tie(a.image_id, a.subject_id) < std::tie(b.image_id, b.subject_id);
        });
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& s : list) rows.push_back(to_json(s));
        write_json(summaries_path(config, conditions[c].name()),
                   {{"condition", conditions[c].name()}, {"model_id", config.vlm.model_id}, {"summaries", rows}});
    }
    std::sort(report.failures.begin(), report.failures.end());
    report.network_requests = client.network_requests();
    print_summary(log, report);
    return report;
}

// ---------------------------------------------------------------------------
// score

inline std::unique_ptr<EmbeddingBackend> make_embedding_backend(const RunConfig& c) {
    if (c.embedding.endpoint.empty()) {
        warn("no embedding endpoint configured; using the orthogonal stub backend (exact-match token similarity)");
        return std::make_unique<OrthogonalStubBackend>();
    }
    if (c.vlm.offline) throw ContractError("--offline forbids the remote embedding backend");
    const RetryPolicy policy{c.vlm.max_retries, c.vlm.request_timeout_s, c.vlm.backoff_base_s, c.vlm.backoff_cap_s};
    return std::make_unique<RemoteEmbeddingBackend>(c.embedding.endpoint, c.embedding.model, policy);
}

struct PairJob {
    const StimulusRecord* record;
    const Scanpath* a;
    const Scanpath* b;
    ScanpathPair pair;
};

inline std::vector<PairJob> pair_jobs(const std::vector<StimulusRecord>& records) {
    std::vector<PairJob> jobs;
    for (const auto& r : records) {
        for (const auto& p : enumerate_pairs(r)) {
            jobs.push_back({&r, r.find(p.subject_a), r.find(p.subject_b), p});
        }
    }
    return jobs;
}

/// Spatial scores for every within-image pair; shared by all conditions.
inline std::vector<SpatialScoreSet> score_spatial(const std::vector<PairJob>& jobs, const SpatialParams& params,
                                                  unsigned workers) {
    std::vector<SpatialScoreSet> out(jobs.size());
    parallel_for(jobs.size(), workers, [&](std::size_t i) { out[i] = compute_spatial(*jobs[i].a, *jobs[i].b, params); });
    return out;
}

/// Semantic and spatial records of one condition; pairs lacking a summary
/// are skipped and reported through `skipped`.
inline std::vector<PairScoreRecord> score_condition(const std::string& condition, const std::vector<PairJob>& jobs,
                                                    const std::vector<SpatialScoreSet>& spatial,
                                                    const SummaryTable& summaries, EmbeddingBackend& backend,
                                                    NormScope scope, unsigned workers,
                                                    std::vector<std::string>& skipped,
                                                    const EmbeddingConfig& embedding = {}) {
    if (summaries.empty()) throw DataError(condition + ": no summaries to score");
    std::map<std::pair<std::string, std::string>, TokenSequence> tokens;
    std::vector<TokenSequence> documents;
    for (const auto& [key, text] : summaries) {
        auto t = tokenize(text);
        documents.push_back(t);
        tokens.emplace(key, std::move(t));
    }
    const Bm25Corpus corpus(documents);
    std::optional<IdfTable> idf;
    if (embedding.idf) idf.emplace(documents);

    std::map<std::pair<std::string, std::string>, std::vector<TokenVector>> vectors;
    for (const auto& [key, t] : tokens) vectors.emplace(key, backend.embed(t));

    std::vector<std::optional<PairScoreRecord>> slots(jobs.size());
    std::vector<std::string> problems(jobs.size());
    parallel_for(jobs.size(), workers, [&](std::size_t i) {
        const auto& job = jobs[i];
        const std::pair ka{job.pair.image_id, job.pair.subject_a};
        const std::pair kb{job.pair.image_id, job.pair.subject_b};
        const auto where = condition + "/" + job.pair.image_id + "/" + job.pair.subject_a + "~" + job.pair.subject_b;
        const auto ta = tokens.find(ka);
        const auto tb = tokens.find(kb);
        if (ta == tokens.end() || tb == tokens.end()) {
            problems[i] = where + ": missing summary for " + (ta == tokens.end() ? ka.second : kb.second);
            return;
        }
        if (ta->second.empty() || tb->second.empty()) {
            problems[i] = where + ": summary has no tokens";
            return;
        }
        PairScoreRecord r;
        r.pair = job.pair;
        r.condition = condition;
        std::vector<double> wa, wb;
        if (idf) wa = idf->weights(ta->second), wb = idf->weights(tb->second);
        auto e = embed_score(vectors.at(ka), vectors.at(kb), wa, wb);
        if (embedding.baseline) e = rescale_with_baseline(e, *embedding.baseline);
        r.semantic.embed_precision = e.precision;
        r.semantic.embed_recall = e.recall;
        r.semantic.embed_f1 = e.f1;
        r.semantic.rouge_l = rouge_l(ta->second, tb->second);
        r.semantic.bleu_4 = bleu_4(ta->second, tb->second);
        r.semantic.bm25_raw = bm25_pair(ta->second, tb->second, corpus);
        r.spatial = spatial[i];
        slots[i] = std::move(r);
    });

    std::vector<PairScoreRecord> out;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (slots[i]) {
            out.push_back(std::move(*slots[i]));
        } else {
            warn(problems[i] + "; pair skipped");
            skipped.push_back(problems[i]);
        }
    }
    std::vector<SemanticScoreSet> semantic;
    for (const auto& r : out) semantic.push_back(r.semantic);
    normalize_bm25(semantic);
    for (std::size_t i = 0; i < out.size(); ++i) out[i].semantic.bm25_norm = semantic[i].bm25_norm;
    normalize_spatial(out, scope);
    return out;
}

inline StageReport cmd_score(const RunConfig& config, std::ostream& log) {
    prepare_output(config);
    const auto records = load_dataset(config);
    const auto conditions = config.encoding_conditions();
    const auto jobs = pair_jobs(records);
    StageReport report{"score", jobs.size() * conditions.size()};

    const auto spatial = score_spatial(jobs, config.spatial, config.workers());
    log << "score: spatial metrics for " << jobs.size() << " pairs\n";
    const auto backend = make_embedding_backend(config);

    for (const auto& cond : conditions) {
        const auto name = cond.name();
        try {
            const auto summaries = read_summaries(config, name);
            auto rows = score_condition(name, jobs, spatial, summaries, *backend, config.norm_scope,
                                        config.workers(), report.failures, config.embedding);
            write_pair_csv(pairs_path(config, name), rows);
            report.completed += rows.size();
            log << "score " << name << ": " << rows.size() << " pairs\n";
        } catch (const DataError& e) {
            report.failures.push_back(name + ": " + e.what());
        } catch (const TransportError& e) {
            report.failures.push_back(name + ": " + e.what());
        }
    }
    print_summary(log, report);
    return report;
}

// ---------------------------------------------------------------------------
// analyze

inline nlohmann::json to_json(const BlurDiagnostics& b) {
    return {{"descriptions", b.descriptions}, {"flagged", b.flagged}, {"rate", b.rate}, {"token_counts", b.token_counts}};
}

inline StageReport cmd_analyze(const RunConfig& config, std::ostream& log) {
    prepare_output(config);
    const auto conditions = config.encoding_conditions();
    StageReport report{"analyze", conditions.size()};

    for (const auto& cond : conditions) {
        const auto name = cond.name();
        try {
            auto rows = read_pair_csv(pairs_path(config, name));
            normalize_spatial(rows, config.norm_scope);
            const auto matrix = correlation_matrix(rows, name);
            write_json(config.out_dir / ("correlation_" + name + ".json"), to_json(matrix));
            write_divergence_csv(config.out_dir / ("divergence_top_" + name + ".csv"),
                                 top_divergences(rows, config.top_k));

            nlohmann::json diagnostics{{"condition", name}, {"pairs", rows.size()}};
            nlohmann::json cells = nlohmann::json::array();
            for (const auto s : kSemanticMetrics) {
                for (const auto p : kSpatialMetrics) {
                    if (!matrix.at(s, p).rho) {
                        cells.push_back({{"semantic", sema::name(s)}, {"spatial", sema::name(p)},
                                         {"n_pairs", matrix.at(s, p).n}});
                    }
                }
            }
            diagnostics["missing_cells"] = cells;
            try {
                std::vector<std::string> texts;
                for (const auto& d : read_descriptions(config, name)) texts.push_back(d.text);
                diagnostics["blur"] = texts.empty() ? nlohmann::json() : to_json(blur_diagnostics(texts, config.blur_lexicon));
            } catch (const DataError&) {
                warn(name + ": descriptions manifest unavailable; blur diagnostics omitted");
                diagnostics["blur"] = nullptr;
            }
            write_json(config.out_dir / ("diagnostics_" + name + ".json"), diagnostics);
            write_text(config.out_dir / ("heatmap_" + name + ".svg"), heatmap_svg(matrix));
            ++report.completed;
            log << "analyze " << name << ": " << rows.size() << " pairs\n";
        } catch (const DataError& e) {
            report.failures.push_back(name + ": " + e.what());
        }
    }
    print_summary(log, report);
    return report;
}

/// describe, summarize, score and analyze in order; stops early only on
/// contract errors (which propagate).
inline StageReport cmd_run_all(const RunConfig& config, std::ostream& log) {
    StageReport total{"run-all"};
    for (auto stage : {cmd_describe, cmd_summarize, cmd_score, cmd_analyze}) {
        const auto r = stage(config, log);
        total.items += r.items;
        total.completed += r.completed;
        total.network_requests += r.network_requests;
        total.failures.insert(total.failures.end(), r.failures.begin(), r.failures.end());
    }
    return total;
}

}  // namespace sema
