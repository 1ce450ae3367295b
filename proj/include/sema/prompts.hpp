#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "sema/error.hpp"

namespace sema::prompts {

inline constexpr std::string_view kPatch =
    "Describe what you see in this image patch in 1-2 sentences. Focus on any objects, faces, "
    "text, or salient visual content. If the patch appears blurry or shows only "
    "texture/background, describe the dominant colour, texture, or any partial object visible.";

inline constexpr std::string_view kMarker =
    "You are analyzing where a viewer looked at an image. The red circle marks the region they "
    "fixated on (the circle center is the exact gaze point). Describe what is inside the circled "
    "region in 1-2 sentences. Focus on objects or elements within the circle, the visual content "
    "at the fixation location, and how this region relates to the broader image context. Be "
    "specific about what the viewer was looking at in that circled area.";

inline constexpr std::string_view kFixationListPlaceholder = "{fixation_list}";

inline constexpr std::string_view kSummary =
    "You are analysing where a human viewer looked at an image. Below are sequential descriptions "
    "of the image regions they fixated on (in temporal order): {fixation_list}. Given the full "
    "image provided and these fixation descriptions, write a single coherent paragraph "
    "summarizing what this viewer attended to and what cognitive strategy they might have used.";

enum class ListStyle { numbered, plain };

/// "[1. a; 2. b]" (numbered) or "[a; b]" (plain).
inline std::string format_fixation_list(const std::vector<std::string>& descriptions,
                                        ListStyle style = ListStyle::numbered) {
    std::string out = "[";
    for (std::size_t i = 0; i < descriptions.size(); ++i) {
        if (i) out += "; ";
        if (style == ListStyle::numbered) out += std::to_string(i + 1) + ". ";
        out += descriptions[i];
    }
    out += "]";
    return out;
}

inline std::string render_summary(const std::vector<std::string>& descriptions,
                                  ListStyle style = ListStyle::numbered,
                                  std::string_view tmpl = kSummary) {
    std::string out(tmpl);
    const auto at = out.find(kFixationListPlaceholder);
    if (at == std::string::npos) throw ContractError("summary prompt has no {fixation_list} slot");
    out.replace(at, kFixationListPlaceholder.size(), format_fixation_list(descriptions, style));
    return out;
}

}  // namespace sema::prompts
