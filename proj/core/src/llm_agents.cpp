// SPDX-License-Identifier: Apache-2.0
#include "proceed/llm_agents.hpp"

#include "proceed/error.hpp"
#include "proceed/prompts.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/spdlog.h>

#include <cctype>
#include <regex>

namespace proceed
{

namespace
{

std::string squash(std::string_view s)
{
    std::string out;
    bool space = false;
    for (char c: s)
    {
        if (std::isspace(static_cast<unsigned char>(c)))
        {
            space = !out.empty();
            continue;
        }
        if (space)
            out.push_back(' ');
        space = false;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

/// Pulls an action out of a free-form reply: action tags first, then a
/// Search(...)/Answer(...) call, then the last non-empty line.
std::string reply_action(std::string_view reply)
{
    if (auto tagged = extract_action_tag(reply))
        return *tagged;
    static const std::regex call(R"((Search|Answer)\([^)]*\))");
    std::string const text(reply);
    std::smatch m;
    if (std::regex_search(text, m, call))
        return m.str(0);
    auto end = text.find_last_not_of(" \t\r\n");
    if (end == std::string::npos)
        return {};
    auto begin = text.rfind('\n', end);
    begin = begin == std::string::npos ? 0 : begin + 1;
    return text.substr(begin, end - begin + 1);
}

} // namespace

std::string render_history(const Trajectory& history)
{
    std::string out;
    for (auto const& s: history.steps)
    {
        if (!out.empty())
            out += '\n';
        out += fmt::format("Observation: {}\nAction: {}\n", s.state_text, s.action);
    }
    if (!history.steps.empty() && history.steps.back().observation)
        out += fmt::format("Observation: {}\n", *history.steps.back().observation);
    return out.empty() ? "(none)" : out;
}

std::size_t match_candidate(const std::vector<std::string>& candidates, std::string_view text)
{
    for (std::size_t i = 0; i < candidates.size(); ++i)
        if (candidates[i] == text)
            return i;
    auto const key = squash(text);
    for (std::size_t i = 0; i < candidates.size(); ++i)
        if (squash(candidates[i]) == key)
            return i;
    return candidates.size();
}

LlmPolicy::LlmPolicy(std::shared_ptr<const LlmClient> client, Sampling sampling):
    _client(std::move(client)), _sampling(sampling)
{
}

PolicyDecision LlmPolicy::ask(const Environment& env, std::string_view excluded, CounterRng& rng) const
{
    auto candidates = env.candidate_actions();
    if (!excluded.empty())
        std::erase(candidates, std::string(excluded));
    if (candidates.empty())
        throw Error(Errc::EmptyCandidates, "no candidate actions to offer the model");

    ChatExchange ex;
    ex.sampling = _sampling;
    ex.messages = {
        {"system", "You are an agent solving a task step by step. Think inside <think> </think> tags, then give "
                   "exactly one admissible action inside <action> </action> tags."},
        {"user", fmt::format("Task: {}\n\nCurrent observation: {}\n\nAdmissible actions: {}", env.task_description(),
                             env.observation(), fmt::join(candidates, ", "))},
    };
    _client->complete(ex);

    PolicyDecision d;
    d.units = ex.usage.completion_units;
    auto const idx = match_candidate(candidates, reply_action(ex.response_text));
    if (idx < candidates.size())
    {
        d.action = candidates[idx];
    }
    else
    {
        d.action = candidates[rng.below(candidates.size())];
        spdlog::warn("model reply matched no admissible action; sampled '{}' instead", d.action);
    }
    return d;
}

PolicyDecision LlmPolicy::decide(const Environment& env, CounterRng& rng) const
{
    return ask(env, {}, rng);
}

std::optional<PolicyDecision> LlmPolicy::decide_excluding(const Environment& env, std::string_view excluded,
                                                          CounterRng& rng) const
{
    auto const candidates = env.candidate_actions();
    if (candidates.empty() || (candidates.size() == 1 && candidates.front() == excluded))
        return std::nullopt;
    return ask(env, excluded, rng);
}

std::optional<double> LlmPolicy::logprob(const Environment& /*env*/, std::string_view /*action*/) const
{
    return std::nullopt;
}

std::string LlmPolicy::id() const
{
    return "llm-" + _client->config().model_name;
}

LlmCritic::LlmCritic(std::shared_ptr<const LlmClient> client, bool reversible_env, int max_reprompts,
                     Sampling sampling):
    Critic(reversible_env), _client(std::move(client)), _max_reprompts(max_reprompts), _sampling(sampling)
{
    if (max_reprompts < 0)
        throw Error(Errc::DomainError, "max_reprompts must be non-negative");
}

std::vector<ChatMessage> LlmCritic::build_prompt(const Trajectory& history, const Environment& env,
                                                 std::string_view action,
                                                 const std::optional<std::string>& next_observation) const
{
    if (env.kind() == EnvKind::Search)
    {
        std::string tool_results(action);
        if (next_observation)
            tool_results += "\n" + *next_observation;
        return render_prompt("search_critic", {
                                                  {"problem", env.task_description()},
                                                  {"tool_results", tool_results},
                                                  {"history", render_history(history)},
                                              });
    }
    return render_prompt("corridor_critic",
                         {
                             {"task_description", env.task_description()},
                             {"environment_config", env.environment_config()},
                             {"action_history", render_history(history)},
                             {"admissible_actions", fmt::format("{}", fmt::join(env.candidate_actions(), ", "))},
                             {"latest_observation", next_observation.value_or(env.observation())},
                             {"agent_action", std::string(action)},
                         });
}

CritiqueRecord LlmCritic::do_evaluate(const Trajectory& history, const Environment& env, std::string_view action,
                                      const std::optional<std::string>& next_observation, CounterRng& /*rng*/) const
{
    ChatExchange ex;
    ex.sampling = _sampling;
    ex.messages = build_prompt(history, env, action, next_observation);
    std::int64_t units = 0;
    for (int attempt = 0;; ++attempt)
    {
        _client->complete(ex);
        units += ex.usage.completion_units;
        try
        {
            auto record = parse_critic_response(ex.response_text);
            record.units = units;
            return record;
        }
        catch (const Error& e)
        {
            if (attempt >= _max_reprompts)
            {
                spdlog::warn("critic output unusable after {} attempts ({}); treating step as score 10",
                             attempt + 1, e.what());
                CritiqueRecord fallback;
                fallback.score = 10;
                fallback.units = units;
                return fallback;
            }
            ex.messages.push_back({"assistant", ex.response_text});
            ex.messages.push_back({"user", fmt::format("Your reply could not be used ({}). Output the JSON result "
                                                       "inside a single ```json code block.",
                                                       to_string(e.code()))});
        }
    }
}

LlmRefiner::LlmRefiner(std::shared_ptr<const LlmClient> client, Sampling sampling):
    _client(std::move(client)), _sampling(sampling)
{
}

Refinement LlmRefiner::refine(const Trajectory& history, const Environment& env, const Policy& /*policy*/,
                              std::string_view rejected, const CritiqueRecord& record, CounterRng& /*rng*/) const
{
    auto const candidates = env.candidate_actions();
    if (candidates.empty() || (candidates.size() == 1 && candidates.front() == rejected))
        throw Error(Errc::NoAlternativeAction, fmt::format("no alternative to '{}'", rejected));

    std::vector<ChatMessage> prompt;
    if (env.kind() == EnvKind::Search && record.suggestion_action)
        prompt = render_prompt("refine_search", {
                                                    {"critique_score", std::to_string(record.score)},
                                                    {"critique_content", record.critique},
                                                    {"critique_suggestion", *record.suggestion_action},
                                                });
    else
        prompt = render_prompt("refine_generic",
                               {
                                   {"latest_step", std::string(rejected)},
                                   {"score", std::to_string(record.score)},
                                   {"critic_content", record.critique},
                                   {"admissible_actions", fmt::format("{}", fmt::join(candidates, ", "))},
                               });

    ChatExchange ex;
    ex.sampling = _sampling;
    ex.messages.push_back(
        {"user", fmt::format("Task: {}\n\n{}\nObservation: {}", env.task_description(), render_history(history),
                             env.observation())});
    ex.messages.push_back({"assistant", fmt::format("<action>{}</action>", rejected)});
    ex.messages.insert(ex.messages.end(), prompt.begin(), prompt.end());
    _client->complete(ex);

    auto idx = match_candidate(candidates, reply_action(ex.response_text));
    if ((idx == candidates.size() || candidates[idx] == rejected) && record.suggestion_action)
        idx = match_candidate(candidates, *record.suggestion_action);
    if (idx == candidates.size() || candidates[idx] == rejected)
        throw Error(Errc::NoAlternativeAction, "refined reply named no admissible alternative");
    return {candidates[idx], ex.usage.completion_units};
}

} // namespace proceed
