// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "proceed/critic.hpp"
#include "proceed/llm_client.hpp"
#include "proceed/policy.hpp"

#include <memory>

namespace proceed
{

/// "Observation: ...\nAction: ...\n" per step, blank line between steps.
std::string render_history(const Trajectory& history);

/// Matches free text against the candidates: exact, then case- and
/// whitespace-insensitive. Returns candidates.size() when nothing matches.
std::size_t match_candidate(const std::vector<std::string>& candidates, std::string_view text);

/// Agent backed by a chat-completion model. Has no tractable log-probs, so
/// it can drive rollouts and evaluation but not the softmax optimizer.
class LlmPolicy final : public Policy
{
public:
    LlmPolicy(std::shared_ptr<const LlmClient> client, Sampling sampling = {});

    [[nodiscard]] PolicyDecision decide(const Environment& env, CounterRng& rng) const override;
    [[nodiscard]] std::optional<PolicyDecision> decide_excluding(const Environment& env, std::string_view excluded,
                                                                 CounterRng& rng) const override;
    [[nodiscard]] std::optional<double> logprob(const Environment& env, std::string_view action) const override;
    [[nodiscard]] std::string id() const override;

private:
    PolicyDecision ask(const Environment& env, std::string_view excluded, CounterRng& rng) const;

    std::shared_ptr<const LlmClient> _client;
    Sampling _sampling;
};

/// Critic rendering the search or corridor critic template. Unparseable
/// replies are re-prompted up to `max_reprompts` times, then scored 10.
class LlmCritic final : public Critic
{
public:
    LlmCritic(std::shared_ptr<const LlmClient> client, bool reversible_env, int max_reprompts = 2,
              Sampling sampling = {});

    [[nodiscard]] std::vector<ChatMessage> build_prompt(const Trajectory& history, const Environment& env,
                                                        std::string_view action,
                                                        const std::optional<std::string>& next_observation) const;

protected:
    CritiqueRecord do_evaluate(const Trajectory& history, const Environment& env, std::string_view action,
                               const std::optional<std::string>& next_observation, CounterRng& rng) const override;

private:
    std::shared_ptr<const LlmClient> _client;
    int _max_reprompts;
    Sampling _sampling;
};

/// Refiner using refine_search when the critic suggested search keywords,
/// refine_generic otherwise. Replies outside the candidate set fall back to
/// the critic's suggestion, then to NoAlternativeAction.
class LlmRefiner final : public Refiner
{
public:
    LlmRefiner(std::shared_ptr<const LlmClient> client, Sampling sampling = {});

    [[nodiscard]] Refinement refine(const Trajectory& history, const Environment& env, const Policy& policy,
                                    std::string_view rejected, const CritiqueRecord& record,
                                    CounterRng& rng) const override;

private:
    std::shared_ptr<const LlmClient> _client;
    Sampling _sampling;
};

} // namespace proceed
