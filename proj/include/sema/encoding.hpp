#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sema/error.hpp"
#include "sema/gaze_data.hpp"
#include "sema/image.hpp"
#include "sema/log.hpp"

namespace sema {

struct PatchSpec {
    int size_px = 96;
};

/// Fixation marker drawn on the full stimulus.
struct MarkerSpec {
    int circle_radius_px = 100;
    int outline_width_px = 3;
    int center_dot_radius_px = 5;
    Rgb color = kRed;

    void validate() const {
        if (circle_radius_px <= 0 || outline_width_px <= 0 || center_dot_radius_px <= 0) {
            throw ContractError("marker radii and outline width must be positive");
        }
        if (circle_radius_px <= center_dot_radius_px) {
            throw ContractError("marker circle radius must exceed the center dot radius");
        }
    }
};

/// Visual context handed to the VLM for each fixation.
class EncodingCondition {
  public:
    enum class Kind { patch, marker };

    static EncodingCondition patch(int size_px) {
        if (size_px <= 0) throw ContractError("patch size must be positive");
        EncodingCondition c;
        c.kind_ = Kind::patch;
        c.patch_ = PatchSpec{size_px};
        return c;
    }

    static EncodingCondition marker(MarkerSpec spec = {}) {
        spec.validate();
        EncodingCondition c;
        c.kind_ = Kind::marker;
        c.marker_ = spec;
        return c;
    }

    /// The four named conditions: patch96, patch192, patch256, marker.
    static EncodingCondition from_name(const std::string& name) {
        if (name == "marker") return marker();
        if (name == "patch96") return patch(96);
        if (name == "patch192") return patch(192);
        if (name == "patch256") return patch(256);
        throw ContractError("unknown encoding condition '" + name +
                            "' (expected patch96, patch192, patch256 or marker)");
    }

    static std::vector<EncodingCondition> standard() {
        return {patch(96), patch(192), patch(256), marker()};
    }

    Kind kind() const noexcept { return kind_; }
    bool is_patch() const noexcept { return kind_ == Kind::patch; }
    const PatchSpec& patch_spec() const noexcept { return patch_; }
    const MarkerSpec& marker_spec() const noexcept { return marker_; }

    std::string name() const {
        return is_patch() ? "patch" + std::to_string(patch_.size_px) : "marker";
    }

    friend bool operator==(const EncodingCondition& a, const EncodingCondition& b) {
        return a.name() == b.name();
    }

  private:
    EncodingCondition() = default;

    Kind kind_ = Kind::patch;
    PatchSpec patch_{};
    MarkerSpec marker_{};
};

struct FixationRef {
    std::string image_id;
    std::string subject_id;
    std::size_t fixation_index = 0;
};

struct EncodedFixation {
    EncodingCondition condition = EncodingCondition::patch(96);
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> png;
    FixationRef provenance;
};

/// Top-left corner of an s-by-s crop window; may be negative when s exceeds
/// the image on that axis.
struct PatchWindow {
    int x = 0;
    int y = 0;
    int size = 0;
};

namespace detail {

inline int window_origin(int center, int size, int extent) {
    if (size <= extent) return std::clamp(center - size / 2, 0, extent - size);
    return -((size - extent) / 2);
}

}  // namespace detail

/// Nominal window [c - s/2, c + s/2), translated to lie inside the image.
inline PatchWindow patch_window(int width, int height, PixelPoint center, PatchSpec spec) {
    if (spec.size_px <= 0) throw ContractError("patch size must be positive");
    return {detail::window_origin(center.px, spec.size_px, width),
            detail::window_origin(center.py, spec.size_px, height), spec.size_px};
}

/// s-by-s crop. Axes shorter than s are edge-replicated.
inline Raster crop_patch(const Raster& image, PixelPoint center, PatchSpec spec) {
    if (!image.contains(center.px, center.py)) {
        throw ContractError("patch center lies outside the image");
    }
    const auto window = patch_window(image.width(), image.height(), center, spec);
    if (spec.size_px > image.width() || spec.size_px > image.height()) {
        warn("patch size " + std::to_string(spec.size_px) + " exceeds image " +
             std::to_string(image.width()) + "x" + std::to_string(image.height()) +
             "; edges are replicated");
    }
    Raster out(spec.size_px, spec.size_px);
    for (int j = 0; j < spec.size_px; ++j) {
        const int sy = std::clamp(window.y + j, 0, image.height() - 1);
        for (int i = 0; i < spec.size_px; ++i) {
            const int sx = std::clamp(window.x + i, 0, image.width() - 1);
            out.set(i, j, image.at(sx, sy));
        }
    }
    return out;
}

/// Draws the circle outline (radius +- width/2) and the filled center dot,
/// without anti-aliasing. Out-of-bounds marker pixels are dropped.
inline void draw_marker(Raster& image, PixelPoint center, const MarkerSpec& spec) {
    spec.validate();
    const double half = spec.outline_width_px / 2.0;
    const double inner = spec.circle_radius_px - half;
    const double outer = spec.circle_radius_px + half;
    const double inner_sq = inner * inner;
    const double outer_sq = outer * outer;
    const double dot_sq = static_cast<double>(spec.center_dot_radius_px) * spec.center_dot_radius_px;
    const int reach = static_cast<int>(std::ceil(outer));

    const int x0 = std::max(0, center.px - reach);
    const int x1 = std::min(image.width() - 1, center.px + reach);
    const int y0 = std::max(0, center.py - reach);
    const int y1 = std::min(image.height() - 1, center.py + reach);
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double dx = x - center.px;
            const double dy = y - center.py;
            const double d_sq = dx * dx + dy * dy;
            if (d_sq <= dot_sq || (d_sq >= inner_sq && d_sq <= outer_sq)) {
                image.set(x, y, spec.color);
            }
        }
    }
}

inline Raster render_marker_raster(const Raster& image, PixelPoint center, const MarkerSpec& spec) {
    if (!image.contains(center.px, center.py)) {
        throw ContractError("marker center lies outside the image");
    }
    Raster out = image;
    draw_marker(out, center, spec);
    return out;
}

inline EncodedFixation extract_patch(const Raster& image, PixelPoint center, PatchSpec spec,
                                     FixationRef provenance = {}) {
    auto patch = crop_patch(image, center, spec);
    return {EncodingCondition::patch(spec.size_px), patch.width(), patch.height(),
            encode_png(patch), std::move(provenance)};
}

inline EncodedFixation render_marker(const Raster& image, PixelPoint center,
                                     const MarkerSpec& spec = {}, FixationRef provenance = {}) {
    auto marked = render_marker_raster(image, center, spec);
    return {EncodingCondition::marker(spec), marked.width(), marked.height(),
            encode_png(marked), std::move(provenance)};
}

/// Encodes one fixation of `scanpath` under `condition`.
inline EncodedFixation encode_fixation(const Raster& image, const StimulusRecord& record,
                                       const Scanpath& scanpath, std::size_t index,
                                       const EncodingCondition& condition) {
    const auto center = to_pixel(scanpath.fixations.at(index), image.width(), image.height());
    FixationRef ref{record.image_id, scanpath.subject_id, index};
    if (condition.is_patch()) {
        return extract_patch(image, center, condition.patch_spec(), std::move(ref));
    }
    return render_marker(image, center, condition.marker_spec(), std::move(ref));
}

}  // namespace sema
