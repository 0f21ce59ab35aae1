// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "proceed/critic.hpp"
#include "proceed/llm_client.hpp"

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace proceed
{

/// search_critic, corridor_critic, refine_generic, refine_search, judge.
std::vector<std::string_view> template_ids();

/// Raw template body. `{{` and `}}` are literal braces; `{name}` is a
/// placeholder. Throws UnknownTemplate.
std::string_view template_body(std::string_view template_id);

/// Placeholder names in order of first appearance.
std::vector<std::string> template_placeholders(std::string_view template_id);

/// Single user message with every placeholder substituted.
/// Throws UnknownTemplate, MissingBinding.
std::vector<ChatMessage> render_prompt(std::string_view template_id,
                                       const std::map<std::string, std::string>& bindings);

/// Extracts the first ``` / ```json fenced block and reads score, critique
/// and suggestions from it. A top-level array uses its first element.
/// Fractional scores are rounded half away from zero.
/// Throws NoJsonBlock, MalformedJson, ScoreOutOfRange.
CritiqueRecord parse_critic_response(std::string_view text);

/// Contents of the last <action>...</action> pair, trimmed.
std::optional<std::string> extract_action_tag(std::string_view text);

} // namespace proceed
