#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rat/llm.hpp"

namespace rat {

inline constexpr std::string_view kDefaultTemplateSet = "default-v1";

namespace templates {
inline constexpr std::string_view kDraft = "draft";            // step-by-step drafting, writing tasks
inline constexpr std::string_view kDraftCode = "draft-code";
inline constexpr std::string_view kDraftMath = "draft-math";
inline constexpr std::string_view kDraftPlan = "draft-plan";
inline constexpr std::string_view kQuery = "query";            // search-query generation
inline constexpr std::string_view kRevise = "revise";          // revision against retrieved text
inline constexpr std::string_view kDirect = "direct";
inline constexpr std::string_view kRag = "rag";
inline constexpr std::string_view kSynthesize = "synthesize";
}  // namespace templates

using Bindings = std::map<std::string, std::string, std::less<>>;

/// Renders a template into a single-user-message conversation. Bindings must
/// cover exactly the template's placeholders; bound values are inserted
/// verbatim and never re-scanned.
Conversation render_prompt(std::string_view template_id, const Bindings& bindings);

/// Raw template text with {placeholder} markers.
const std::string& template_text(std::string_view template_id);
std::vector<std::string> template_placeholders(std::string_view template_id);
std::vector<std::string> template_ids();

/// FNV-1a over every template id and text, for run manifests.
std::string template_set_hash();

}  // namespace rat
