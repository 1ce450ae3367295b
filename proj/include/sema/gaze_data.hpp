#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sema/error.hpp"
#include "sema/image.hpp"

namespace sema {

/// One fixation in normalized image coordinates.
struct Fixation {
    double x = 0.0;
    double y = 0.0;
    double duration_ms = 0.0;

    friend bool operator==(const Fixation&, const Fixation&) = default;
};

/// Temporally ordered fixations of one viewer on one image.
struct Scanpath {
    std::string subject_id;
    std::vector<Fixation> fixations;

    std::size_t size() const noexcept { return fixations.size(); }

    friend bool operator==(const Scanpath&, const Scanpath&) = default;
};

struct StimulusRecord {
    std::string image_id;
    std::filesystem::path image_path;
    int width_px = 0;
    int height_px = 0;
    std::vector<Scanpath> scanpaths;

    const Scanpath* find(const std::string& subject_id) const {
        for (const auto& s : scanpaths) {
            if (s.subject_id == subject_id) return &s;
        }
        return nullptr;
    }

    friend bool operator==(const StimulusRecord&, const StimulusRecord&) = default;
};

struct PixelPoint {
    int px = 0;
    int py = 0;

    friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

/// Canonical within-image pair, subject_a < subject_b.
struct ScanpathPair {
    std::string image_id;
    std::string subject_a;
    std::string subject_b;

    friend auto operator<=>(const ScanpathPair&, const ScanpathPair&) = default;
};

/// Units of the fixation coordinates in an imported manifest.
enum class CoordinateUnits { normalized, pixels };

struct ParseOptions {
    CoordinateUnits units = CoordinateUnits::normalized;
    /// Open every image and compare its size against width_px/height_px.
    bool check_images = true;
};

/// floor(x * W), clamped into [0, W-1]; same for y.
inline PixelPoint to_pixel(const Fixation& f, int width, int height) {
    if (width <= 0 || height <= 0) {
        throw ContractError("image dimensions must be positive");
    }
    const auto px = static_cast<long long>(std::floor(f.x * width));
    const auto py = static_cast<long long>(std::floor(f.y * height));
    return {static_cast<int>(std::clamp<long long>(px, 0, width - 1)),
            static_cast<int>(std::clamp<long long>(py, 0, height - 1))};
}

/// All n(n-1)/2 canonical pairs, ordered by (subject_a, subject_b).
inline std::vector<ScanpathPair> enumerate_pairs(const StimulusRecord& record) {
    std::vector<std::string> ids;
    ids.reserve(record.scanpaths.size());
    for (const auto& s : record.scanpaths) ids.push_back(s.subject_id);
    std::sort(ids.begin(), ids.end());

    std::vector<ScanpathPair> pairs;
    if (ids.size() < 2) return pairs;
    pairs.reserve(ids.size() * (ids.size() - 1) / 2);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::size_t j = i + 1; j < ids.size(); ++j) {
            pairs.push_back({record.image_id, ids[i], ids[j]});
        }
    }
    return pairs;
}

inline std::vector<ScanpathPair> enumerate_pairs(const std::vector<StimulusRecord>& records) {
    std::vector<ScanpathPair> all;
    for (const auto& r : records) {
        auto pairs = enumerate_pairs(r);
        all.insert(all.end(), pairs.begin(), pairs.end());
    }
    return all;
}

namespace detail {

class ManifestReader {
  public:
    ManifestReader(std::filesystem::path base_dir, ParseOptions options)
        : base_dir_(std::move(base_dir)), options_(options) {}

    std::vector<StimulusRecord> read(const nlohmann::json& root) const {
        if (!root.is_array()) fail("$", "top level must be a list of image records");
        std::vector<StimulusRecord> records;
        records.reserve(root.size());
        std::set<std::string> image_ids;
        for (std::size_t i = 0; i < root.size(); ++i) {
            auto record = read_record(root[i], "$[" + std::to_string(i) + "]");
            if (!image_ids.insert(record.image_id).second) {
                fail("$[" + std::to_string(i) + "].image_id",
                     "duplicate image_id '" + record.image_id + "'");
            }
            records.push_back(std::move(record));
        }
        return records;
    }

  private:
    [[noreturn]] static void fail(const std::string& where, const std::string& what) {
        throw DataError("manifest schema violation at " + where + ": " + what);
    }

    static const nlohmann::json& field(const nlohmann::json& obj, const char* name,
                                       const std::string& where) {
        if (!obj.is_object()) fail(where, "expected an object");
        const auto it = obj.find(name);
        if (it == obj.end()) fail(where, std::string("missing field '") + name + "'");
        return *it;
    }

    static std::string string_field(const nlohmann::json& obj, const char* name,
                                    const std::string& where) {
        const auto& v = field(obj, name, where);
        if (!v.is_string()) fail(where + "." + name, "expected a string");
        return v.get<std::string>();
    }

    static int positive_int_field(const nlohmann::json& obj, const char* name,
                                  const std::string& where) {
        const auto& v = field(obj, name, where);
        if (!v.is_number_integer() || v.get<long long>() <= 0 ||
            v.get<long long>() > std::numeric_limits<int>::max()) {
            fail(where + "." + name, "expected a positive integer");
        }
        return v.get<int>();
    }

    static double number_field(const nlohmann::json& obj, const char* name,
                               const std::string& where) {
        const auto& v = field(obj, name, where);
        if (!v.is_number()) fail(where + "." + name, "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) fail(where + "." + name, "expected a finite number");
        return d;
    }

    StimulusRecord read_record(const nlohmann::json& obj, const std::string& where) const {
        StimulusRecord record;
        record.image_id = string_field(obj, "image_id", where);
        record.image_path =
            (base_dir_ / string_field(obj, "image_path", where)).lexically_normal();
        record.width_px = positive_int_field(obj, "width_px", where);
        record.height_px = positive_int_field(obj, "height_px", where);

        const auto& paths = field(obj, "scanpaths", where);
        if (!paths.is_array()) fail(where + ".scanpaths", "expected a list");
        std::set<std::string> subjects;
        for (std::size_t i = 0; i < paths.size(); ++i) {
            const auto at = where + ".scanpaths[" + std::to_string(i) + "]";
            auto scanpath = read_scanpath(paths[i], at, record);
            if (!subjects.insert(scanpath.subject_id).second) {
                fail(at + ".subject_id", "duplicate subject_id '" + scanpath.subject_id +
                                             "' in image '" + record.image_id + "'");
            }
            record.scanpaths.push_back(std::move(scanpath));
        }

        if (options_.check_images) {
            if (!std::filesystem::exists(record.image_path)) {
                throw DataError("image file not found: " + record.image_path.string() +
                                " (" + where + ".image_path)");
            }
            const auto size = probe_image_size(record.image_path);
            if (size.width != record.width_px || size.height != record.height_px) {
                throw DataError("image dimension mismatch for '" + record.image_id +
                                "': manifest says " + std::to_string(record.width_px) + "x" +
                                std::to_string(record.height_px) + ", file is " +
                                std::to_string(size.width) + "x" +
                                std::to_string(size.height));
            }
        }
        return record;
    }

    Scanpath read_scanpath(const nlohmann::json& obj, const std::string& where,
                           const StimulusRecord& record) const {
        Scanpath scanpath;
        scanpath.subject_id = string_field(obj, "subject_id", where);
        const auto& fixations = field(obj, "fixations", where);
        if (!fixations.is_array()) fail(where + ".fixations", "expected a list");
        if (fixations.empty()) fail(where + ".fixations", "a scanpath needs at least one fixation");
        scanpath.fixations.reserve(fixations.size());
        for (std::size_t i = 0; i < fixations.size(); ++i) {
            const auto at = where + ".fixations[" + std::to_string(i) + "]";
            Fixation f{number_field(fixations[i], "x", at), number_field(fixations[i], "y", at),
                       number_field(fixations[i], "duration_ms", at)};
            if (options_.units == CoordinateUnits::pixels) {
                f.x /= record.width_px;
                f.y /= record.height_px;
            }
            if (f.x < 0.0 || f.x > 1.0) {
                fail(at + ".x", "coordinate " + std::to_string(f.x) + " outside [0,1] (fixation " +
                                    std::to_string(i) + ")");
            }
            if (f.y < 0.0 || f.y > 1.0) {
                fail(at + ".y", "coordinate " + std::to_string(f.y) + " outside [0,1] (fixation " +
                                    std::to_string(i) + ")");
            }
            if (f.duration_ms < 0.0) fail(at + ".duration_ms", "duration must be nonnegative");
            scanpath.fixations.push_back(f);
        }
        return scanpath;
    }

    std::filesystem::path base_dir_;
    ParseOptions options_;
};

}  // namespace detail

/// Parses and validates a JSON manifest. Image paths resolve against the
/// manifest's directory.
inline std::vector<StimulusRecord> parse_dataset(const std::filesystem::path& manifest,
                                                 ParseOptions options = {}) {
    std::ifstream in(manifest);
    if (!in) throw DataError("manifest not found: " + manifest.string());
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("manifest is not valid JSON: " + manifest.string() + ": " + e.what());
    }
    return detail::ManifestReader(manifest.parent_path(), options).read(root);
}

/// Inverse of parse_dataset. Image paths are written as stored in the records.
inline nlohmann::json to_json(const std::vector<StimulusRecord>& records) {
    auto root = nlohmann::json::array();
    for (const auto& r : records) {
        auto paths = nlohmann::json::array();
        for (const auto& s : r.scanpaths) {
            auto fixations = nlohmann::json::array();
            for (const auto& f : s.fixations) {
                fixations.push_back({{"x", f.x}, {"y", f.y}, {"duration_ms", f.duration_ms}});
            }
            paths.push_back({{"subject_id", s.subject_id}, {"fixations", std::move(fixations)}});
        }
        root.push_back({{"image_id", r.image_id},
                        {"image_path", r.image_path.string()},
                        {"width_px", r.width_px},
                        {"height_px", r.height_px},
                        {"scanpaths", std::move(paths)}});
    }
    return root;
}

inline void write_dataset(const std::filesystem::path& manifest,
                          const std::vector<StimulusRecord>& records) {
    std::ofstream out(manifest);
    if (!out) throw DataError("cannot write manifest: " + manifest.string());
    out << to_json(records).dump(2) << '\n';
}

inline std::size_t total_scanpaths(const std::vector<StimulusRecord>& records) {
    std::size_t n = 0;
    for (const auto& r : records) n += r.scanpaths.size();
    return n;
}

}  // namespace sema
