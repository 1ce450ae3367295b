// sema: scanpath description and similarity pipeline.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sema/pipeline.hpp"

namespace {

struct Flags {
    std::string config, manifest, conditions, out, cache_dir, vlm_endpoint, api_key, embed_endpoint, model, grid,
        norm_scope, dump_encodings, blur_lexicon, coords, list_style;
    int tde_m = 0, tde_delay = 0, max_concurrent = 0, max_retries = 0;
    double scanmatch_gap = 0, scanmatch_maxsub = 0, timeout = 0, embed_baseline = 0;
    std::size_t top_k = 0;
    unsigned workers = 0;
    std::uint64_t seed = 0;
    bool offline = false, embed_idf = false;
};

void add_options(CLI::App& cmd, Flags& f, std::map<std::string, CLI::Option*>& opts) {
    auto add = [&](const std::string& key, CLI::Option* o) { opts[key] = o; };
    add("config", cmd.add_option("--config", f.config, "JSON config file; flags override it"));
    add("manifest", cmd.add_option("--manifest", f.manifest, "Dataset manifest (JSON)"));
    add("conditions", cmd.add_option("--conditions", f.conditions, "Comma list: patch96,patch192,patch256,marker"));
    add("out", cmd.add_option("--out", f.out, "Output directory"));
    add("cache_dir", cmd.add_option("--cache-dir", f.cache_dir, "Response cache directory (default .sema-cache)"));
    add("vlm_endpoint", cmd.add_option("--vlm-endpoint", f.vlm_endpoint, "OpenAI-compatible base URL")
                            ->envname("VLM_ENDPOINT"));
    add("api_key", cmd.add_option("--api-key", f.api_key, "Bearer token")->envname("VLM_API_KEY"));
    add("model", cmd.add_option("--model", f.model, "VLM model id"));
    add("embed_endpoint", cmd.add_option("--embed-endpoint", f.embed_endpoint, "Token embedding service URL")
                              ->envname("EMBED_ENDPOINT"));
    add("embed_idf", cmd.add_flag("--embed-idf", f.embed_idf, "IDF-weight the embedding score"));
    add("embed_baseline", cmd.add_option("--embed-baseline", f.embed_baseline, "Rescale embedding scores against this baseline"));
    add("grid", cmd.add_option("--grid", f.grid, "Grid for string metrics, COLSxROWS (default 14x8)"));
    add("tde_m", cmd.add_option("--tde-m", f.tde_m, "TDE embedding dimension (default 3)"));
    add("tde_delay", cmd.add_option("--tde-delay", f.tde_delay, "TDE delay (default 1)"));
    add("scanmatch_gap", cmd.add_option("--scanmatch-gap", f.scanmatch_gap, "ScanMatch gap penalty (default 0)"));
    add("scanmatch_maxsub", cmd.add_option("--scanmatch-maxsub", f.scanmatch_maxsub, "ScanMatch max substitution"));
    add("norm_scope", cmd.add_option("--norm-scope", f.norm_scope, "Distance normalization scope: condition|image"));
    add("dump_encodings", cmd.add_option("--dump-encodings", f.dump_encodings, "Write encoded PNGs here"));
    add("offline", cmd.add_flag("--offline", f.offline, "Cache only; no network calls"));
    add("top_k", cmd.add_option("--top-k", f.top_k, "Rows in divergence tables (default 50)"));
    add("blur_lexicon", cmd.add_option("--blur-lexicon", f.blur_lexicon, "Comma list of blur tokens"));
    add("coords", cmd.add_option("--coords", f.coords, "Manifest coordinates: normalized|pixels"));
    add("list_style", cmd.add_option("--list-style", f.list_style, "Fixation list in summaries: numbered|plain"));
    add("max_concurrent", cmd.add_option("--max-concurrent", f.max_concurrent, "In-flight VLM requests (default 4)"));
    add("max_retries", cmd.add_option("--max-retries", f.max_retries, "Retries per request (default 3)"));
    add("timeout", cmd.add_option("--timeout", f.timeout, "Request timeout in seconds (default 120)"));
    add("workers", cmd.add_option("--workers", f.workers, "Threads for compute stages (default: all cores)"));
    add("seed", cmd.add_option("--seed", f.seed, "Recorded random seed"));
}

sema::RunConfig build_config(const Flags& f, const std::map<std::string, CLI::Option*>& opts) {
    auto given = [&](const char* key) { return opts.at(key)->count() > 0; };
    sema::RunConfig c;
    if (given("config")) c = sema::load_config_file(f.config);
    nlohmann::json overrides = nlohmann::json::object();
    if (given("manifest")) overrides["manifest"] = f.manifest;
    if (given("conditions")) overrides["conditions"] = f.conditions;
    if (given("out")) overrides["out"] = f.out;
    if (given("cache_dir")) overrides["cache_dir"] = f.cache_dir;
    if (given("vlm_endpoint")) overrides["vlm_endpoint"] = f.vlm_endpoint;
    if (given("model")) overrides["model"] = f.model;
    if (given("embed_endpoint")) overrides["embed_endpoint"] = f.embed_endpoint;
    if (given("embed_idf")) overrides["embed_idf"] = f.embed_idf;
    if (given("embed_baseline")) overrides["embed_baseline"] = f.embed_baseline;
    if (given("grid")) overrides["grid"] = f.grid;
    if (given("tde_m")) overrides["tde_m"] = f.tde_m;
    if (given("tde_delay")) overrides["tde_delay"] = f.tde_delay;
    if (given("scanmatch_gap")) overrides["scanmatch_gap"] = f.scanmatch_gap;
    if (given("scanmatch_maxsub")) overrides["scanmatch_maxsub"] = f.scanmatch_maxsub;
    if (given("norm_scope")) overrides["norm_scope"] = f.norm_scope;
    if (given("dump_encodings")) overrides["dump_encodings"] = f.dump_encodings;
    if (given("offline")) overrides["offline"] = f.offline;
    if (given("top_k")) overrides["top_k"] = f.top_k;
    if (given("blur_lexicon")) overrides["blur_lexicon"] = f.blur_lexicon;
    if (given("coords")) overrides["coords"] = f.coords;
    if (given("list_style")) overrides["list_style"] = f.list_style;
    if (given("max_concurrent")) overrides["max_concurrent"] = f.max_concurrent;
    if (given("max_retries")) overrides["max_retries"] = f.max_retries;
    if (given("timeout")) overrides["request_timeout"] = f.timeout;
    if (given("workers")) overrides["workers"] = f.workers;
    if (given("seed")) overrides["seed"] = f.seed;
    sema::apply_config_json(c, overrides);
    if (given("api_key")) c.vlm.api_key = f.api_key;
    if (!c.vlm.offline && c.vlm.endpoint_url.empty()) {
        sema::warn("no VLM endpoint configured; only cached responses can be used");
        c.vlm.offline = true;
    }
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Scanpath description and semantic/spatial similarity pipeline"};
    app.require_subcommand(1);
    Flags flags;
    std::map<std::string, CLI::Option*> opts;
    using Stage = sema::StageReport (*)(const sema::RunConfig&, std::ostream&);
    const std::vector<std::tuple<std::string, std::string, Stage>> stages{
        {"describe", "Encode every fixation and describe it with the VLM", sema::cmd_describe},
        {"summarize", "Summarize each scanpath from its fixation descriptions", sema::cmd_summarize},
        {"score", "Compute semantic and spatial scores for every within-image pair", sema::cmd_score},
        {"analyze", "Correlations, divergence tables, diagnostics and heatmaps", sema::cmd_analyze},
        {"run-all", "All stages in order", sema::cmd_run_all}};
    std::vector<CLI::App*> commands;
    for (const auto& [name, help, fn] : stages) {
        auto* cmd = app.add_subcommand(name, help);
        commands.push_back(cmd);
    }
    // Options are registered per subcommand; only the selected one is parsed.
    std::vector<std::map<std::string, CLI::Option*>> per_command(commands.size());
    for (std::size_t i = 0; i < commands.size(); ++i) add_options(*commands[i], flags, per_command[i]);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    for (std::size_t i = 0; i < commands.size(); ++i) {
        if (!commands[i]->parsed()) continue;
        try {
            const auto config = build_config(flags, per_command[i]);
            const auto report = std::get<2>(stages[i])(config, std::cerr);
            return report.exit_code();
        } catch (const sema::ContractError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return 2;
        } catch (const sema::DataError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return 2;
        } catch (const sema::Error& e) {
            std::cerr << "error: " << e.what() << '\n';
            return 1;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return 2;
        }
    }
    return 2;
}
