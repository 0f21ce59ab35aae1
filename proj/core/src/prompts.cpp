// SPDX-License-Identifier: Apache-2.0
#include "proceed/prompts.hpp"

#include "proceed/error.hpp"

#include <fmt/format.h>

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <utility>

namespace proceed
{

namespace
{

constexpr std::string_view kSearchCritic = R"tpl(You are an expert in solving difficult problems through reasoning and retrieval.

Currently, an agent is attempting to answer a question through multi-round calls to search tools. The question, the agent's current action and retrieved documents, and history turns are provided.

Your task is to evaluate and score one round of the agent's calls, determining whether the search queries in the current round is correct for answering the question.

The score ranges from 0 to 10, where 0 means completely incorrect and 10 means completely correct.

Your score and analysis will serve as feedback to help the agent decide whether to revise the search terms or proceed to the next round of retrieval and reasoning.
If feeling necessary, you can also output your revised search terms and a supporting thinking process for these search queries.

Output format: The final output is list data in JSON format as 

``` json

{{"score": score, "critique": "your analysis", "suggestion_search_keywords": "[your revised queries,...]", "suggestion_search_reasoning": "step-by-step reasoning that supports the improved query as if you are the agent for it to learn from, without mentioning the current tool call and you are a critic."}}

```

Question: {problem}

Search Query: {tool_results}

History Turns: {history})tpl";

constexpr std::string_view kCorridorCritic = R"tpl(You are an expert evaluator observing an agent trying to complete a task in a household environment.

You will be provided with the agent's task description, the environment's configuration, a history of its previous actions and observations, current admissible actions, and the agent's most recent action.

- Agent's Task: {task_description}

- Environment Configuration: {environment_config}

- History Turns (observations and the corresponding actions the agent took): {action_history}

- Admissible Actions: {admissible_actions}

- Agent's Latest Observation: {latest_observation}

- Agent's Latest Action: {agent_action}

Your goal is to evaluate and score the quality of the agent's latest action, determining if it is a good action for accomplishing the task. The score ranges from 0 to 10, where 0 means completely incorrect and 10 means completely correct.
Also give a consice yet complete analysis of the agent's last action. Was it logical? Did it move closer to the goal? Did it make a mistake?
If feeling neccessary (like the action is misleading), you can suggest a better candidate action FROM admissible actions together with your step-by-step reasoning. Your suggested action and reasoning may be used by the agent to improve its performance, so ensure the action is from the admissible actions and the reasoning is from an expert agent's first-person view.


Output Format: Output your critic result in JSON format as

```json

{{"score": {{score}}, "critique": "{{your analysis}}", "suggestion_action": "{{The better admissible action you suggest}}", "suggestion_thought": "{{Your detailed step-by-step reasoning for the better action.}} "}}

```

Ensure to enclose the entire JSON output within a single markdown code block.)tpl";

constexpr std::string_view kRefineGeneric = R"tpl(An expert critic has commented on your latest step {latest_step}, judging the quality of your latest step and whether it helps finishing your task.

- Critic's Overall Ratings (0-10): {score}.

- Critic's Analysis on your previous step: {critic_content}

Your admissible actions of the current situation are: {admissible_actions}.

Carefully read and understand the critic's feedback, and it's your turn to refine the step and retake an feasible action based on the feedback.

You should first reason step-by-step about the previous situation. This reasoning process MUST be enclosed within <think> </think> tags, and do not include any information about the critic, as if it's your first time making the action.

Once you've finished your reasoning, you should choose an admissible action for current step and present it within <action> </action> tags.)tpl";

constexpr std::string_view kRefineSearch = R"tpl(A critic has read and analysed your previous step:


- Critic's Overall Ratings (0-10): {critique_score}

- Critic's Analysis on your previous step: {critique_content}

- Critic's Suggestion search keywords: {critique_suggestion}


Based on the critic's feedback, redo your previous tool call to improve its correctness and quality, in order to better solve the problem.

Note: When you redo and refine the tool call, you should act as if you are making the action the first time, do not add any information about the critic.)tpl";

constexpr std::string_view kJudge = R"tpl(You are an impartial judge evaluating the correctness of an AI assistant's answer.

[Question]

{question}

[Correct Answer]

{reference_answer}

[Assistant's Answer]

{assistant_answer}

Task: Determine if the assistant's answer is correct by comparing it to the correct answer.

Instructions:

1. Extract the final answer from the assistant's response

2. Compare it with the correct answer

3. Provide your reasoning

4. Answer with "yes" if correct, "no" if incorrect)tpl";

constexpr std::array<std::pair<std::string_view, std::string_view>, 5> kTemplates{{
    {"search_critic", kSearchCritic},
    {"corridor_critic", kCorridorCritic},
    {"refine_generic", kRefineGeneric},
    {"refine_search", kRefineSearch},
    {"judge", kJudge},
}};

bool is_name_char(char c)
{
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

/// Length of a `{name}` placeholder starting at `pos`, 0 if none.
std::size_t placeholder_at(std::string_view body, std::size_t pos)
{
    if (body[pos] != '{')
        return 0;
    std::size_t end = pos + 1;
    while (end < body.size() && is_name_char(body[end]))
        ++end;
    if (end == pos + 1 || end >= body.size() || body[end] != '}')
        return 0;
    return end - pos + 1;
}

template <class OnText, class OnName>
void scan(std::string_view body, OnText on_text, OnName on_name)
{
    std::size_t i = 0;
    while (i < body.size())
    {
        if (body.compare(i, 2, "{{") == 0 || body.compare(i, 2, "}}") == 0)
        {
            on_text(body.substr(i, 1));
            i += 2;
            continue;
        }
        if (auto const len = placeholder_at(body, i))
        {
            on_name(std::string(body.substr(i + 1, len - 2)));
            i += len;
            continue;
        }
        on_text(body.substr(i, 1));
        ++i;
    }
}

std::string trim(std::string_view s)
{
    auto const b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos)
        return {};
    auto const e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::optional<std::string> string_field(const nlohmann::json& obj, const char* key)
{
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null())
        return std::nullopt;
    if (it->is_string())
        return it->get<std::string>();
    return it->dump();
}

} // namespace

std::vector<std::string_view> template_ids()
{
    std::vector<std::string_view> ids;
    for (auto const& [id, body]: kTemplates)
        ids.push_back(id);
    return ids;
}

std::string_view template_body(std::string_view template_id)
{
    for (auto const& [id, body]: kTemplates)
        if (id == template_id)
            return body;
    throw Error(Errc::UnknownTemplate, fmt::format("unknown prompt template '{}'", template_id));
}

std::vector<std::string> template_placeholders(std::string_view template_id)
{
    std::vector<std::string> names;
    scan(template_body(template_id), [](std::string_view) {},
         [&](std::string name) {
             if (std::find(names.begin(), names.end(), name) == names.end())
                 names.push_back(std::move(name));
         });
    return names;
}

std::vector<ChatMessage> render_prompt(std::string_view template_id,
                                       const std::map<std::string, std::string>& bindings)
{
    auto const body = template_body(template_id);
    std::string out;
    out.reserve(body.size() + 256);
    scan(body, [&](std::string_view text) { out.append(text); },
         [&](const std::string& name) {
             auto it = bindings.find(name);
             if (it == bindings.end())
                 throw Error(Errc::MissingBinding,
                             fmt::format("template '{}' needs a binding for '{}'", template_id, name));
             out.append(it->second);
         });
    return {ChatMessage{"user", std::move(out)}};
}

CritiqueRecord parse_critic_response(std::string_view text)
{
    auto const open = text.find("```");
    if (open == std::string_view::npos)
        throw Error(Errc::NoJsonBlock, "response has no fenced block");
    auto start = open + 3;
    while (start < text.size() && (text[start] == ' ' || text[start] == '\t'))
        ++start;
    if (text.compare(start, 4, "json") == 0)
        start += 4;
    auto const close = text.find("```", start);
    if (close == std::string_view::npos)
        throw Error(Errc::NoJsonBlock, "fenced block is not closed");
    auto const block = text.substr(start, close - start);

    nlohmann::json j;
    try
    {
        j = nlohmann::json::parse(block);
    }
    catch (const nlohmann::json::exception& e)
    {
        throw Error(Errc::MalformedJson, fmt::format("fenced block is not JSON: {}", e.what()));
    }
    if (j.is_array() && !j.empty())
        j = j.front();
    if (!j.is_object())
        throw Error(Errc::MalformedJson, "critic output is not a JSON object");
    auto const it = j.find("score");
    if (it == j.end() || !it->is_number())
        throw Error(Errc::MalformedJson, "critic output has no numeric score");

    double const raw = it->get<double>();
    if (!(raw >= -0.5 && raw < 10.5))
        throw Error(Errc::ScoreOutOfRange, fmt::format("score {} outside [0,10]", it->dump()));
    long const score = std::lround(raw);
    if (score < 0 || score > 10)
        throw Error(Errc::ScoreOutOfRange, fmt::format("score {} outside [0,10]", it->dump()));

    CritiqueRecord r;
    r.score = static_cast<int>(score);
    r.critique = string_field(j, "critique").value_or("");
    r.suggestion_action = string_field(j, "suggestion_action");
    if (!r.suggestion_action)
        r.suggestion_action = string_field(j, "suggestion_search_keywords");
    r.suggestion_reasoning = string_field(j, "suggestion_thought");
    if (!r.suggestion_reasoning)
        r.suggestion_reasoning = string_field(j, "suggestion_search_reasoning");
    return r;
}

std::optional<std::string> extract_action_tag(std::string_view text)
{
    auto const close = text.rfind("</action>");
    if (close == std::string_view::npos)
        return std::nullopt;
    auto const open = text.rfind("<action>", close);
    if (open == std::string_view::npos)
        return std::nullopt;
    auto const start = open + std::string_view("<action>").size();
    return trim(text.substr(start, close - start));
}

} // namespace proceed
