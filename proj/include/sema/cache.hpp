#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <thread>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "sema/error.hpp"

namespace sema {

/// Content-addressed JSON records, one file per key at
/// <root>/<k[0:2]>/<k[2:4]>/<key>.json. Writes go through a temp file and a
/// rename, so readers never see a partial record and concurrent writers of
/// one key end with one complete copy.
class CacheStore {
  public:
    explicit CacheStore(std::filesystem::path root) : root_(std::move(root)) {}

    const std::filesystem::path& root() const noexcept { return root_; }

    std::filesystem::path path_for(const std::string& key) const {
        if (key.size() < 5) throw ContractError("cache key too short: '" + key + "'");
        return root_ / key.substr(0, 2) / key.substr(2, 2) / (key + ".json");
    }

    std::optional<nlohmann::json> get(const std::string& key) const {
        const auto path = path_for(key);
        std::ifstream in(path);
        if (!in) return std::nullopt;
        try {
            return nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error&) {
            return std::nullopt;  // treated as a miss and overwritten
        }
    }

    bool contains(const std::string& key) const { return std::filesystem::exists(path_for(key)); }

    void put(const std::string& key, const nlohmann::json& record) const {
        const auto path = path_for(key);
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw DataError("cannot create cache directory " + path.parent_path().string());
        std::ostringstream tmp_name;
        tmp_name << key << ".tmp." << ::getpid() << '.' << std::this_thread::get_id() << '.'
                 << counter().fetch_add(1);
        const auto tmp = path.parent_path() / tmp_name.str();
        {
            std::ofstream out(tmp, std::ios::binary);
            if (!out) throw DataError("cannot write cache file " + tmp.string());
            out << record.dump(2) << '\n';
            if (!out.flush()) throw DataError("cannot write cache file " + tmp.string());
        }
        std::filesystem::rename(tmp, path, ec);
        if (ec) {
            std::filesystem::remove(tmp);
            throw DataError("cannot finalize cache file " + path.string() + ": " + ec.message());
        }
    }

  private:
    static std::atomic<unsigned long long>& counter() {
        static std::atomic<unsigned long long> c{0};
        return c;
    }

    std::filesystem::path root_;
};

}  // namespace sema
