// SPDX-License-Identifier: Apache-2.0
#include "proceed/critic.hpp"

#include "proceed/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace proceed
{

std::string_view to_string(CriticKind kind) noexcept
{
    switch (kind)
    {
        case CriticKind::Oracle: return "oracle";
        case CriticKind::SelfCritic: return "self";
        case CriticKind::Homogeneous: return "homogeneous";
        case CriticKind::External: return "external";
    }
    return "oracle";
}

CriticKind critic_kind_from_string(std::string_view name)
{
    if (name == "oracle")
        return CriticKind::Oracle;
    if (name == "self")
        return CriticKind::SelfCritic;
    if (name == "homogeneous")
        return CriticKind::Homogeneous;
    if (name == "external")
        return CriticKind::External;
    throw Error(Errc::ConfigError, fmt::format("unknown critic kind '{}'", name));
}

void validate(const CriticConfig& config)
{
    if (config.threshold < 0 || config.threshold > 10)
        throw Error(Errc::DomainError, fmt::format("threshold {} outside [0,10]", config.threshold));
    if (config.refiner_fidelity < 0.0 || config.refiner_fidelity > 1.0)
        throw Error(Errc::DomainError, fmt::format("refiner fidelity {} outside [0,1]", config.refiner_fidelity));
    if (config.max_refinements_per_step < 0)
        throw Error(Errc::DomainError, "max_refinements_per_step must be non-negative");
    if (config.score_noise < 0.0)
        throw Error(Errc::DomainError, "score noise must be non-negative");
}

bool should_rewind(const CritiqueRecord& record, const CriticConfig& config) noexcept
{
    return record.score <= config.threshold;
}

CritiqueRecord Critic::evaluate(const Trajectory& history, const Environment& env, std::string_view action,
                                const std::optional<std::string>& next_observation, CounterRng& rng) const
{
    if (_reversible && !next_observation)
        throw Error(Errc::ContractViolation, "reversible critic needs the next observation");
    if (!_reversible && next_observation)
        throw Error(Errc::ContractViolation, "irreversible critic must evaluate without the next observation");
    auto record = do_evaluate(history, env, action, next_observation, rng);
    if (record.score < 0 || record.score > 10)
        throw Error(Errc::ScoreOutOfRange, fmt::format("critic produced score {}", record.score));
    return record;
}

OracleCritic::OracleCritic(bool reversible_env, double score_noise):
    Critic(reversible_env), _score_noise(score_noise)
{
    if (score_noise < 0.0)
        throw Error(Errc::DomainError, "score noise must be non-negative");
}

CritiqueRecord OracleCritic::do_evaluate(const Trajectory& /*history*/, const Environment& env,
                                         std::string_view action, const std::optional<std::string>& /*next_obs*/,
                                         CounterRng& rng) const
{
    int const exact = env.oracle_step_value(action);
    int score = exact;
    if (_score_noise > 0.0)
        score = std::clamp(static_cast<int>(std::lround(exact + _score_noise * rng.normal())), 0, 10);

    std::string_view verdict = exact >= 8   ? "moves directly toward the goal"
                               : exact >= 4 ? "makes little or partial progress"
                                            : "works against the goal and risks misleading context";
    CritiqueRecord r;
    r.score = score;
    r.critique = fmt::format("The action '{}' {}.", action, verdict);
    r.units = text_units(r.critique);
    return r;
}

OracleRefiner::OracleRefiner(double fidelity): _fidelity(fidelity)
{
    if (fidelity < 0.0 || fidelity > 1.0)
        throw Error(Errc::DomainError, fmt::format("refiner fidelity {} outside [0,1]", fidelity));
}

Refinement OracleRefiner::refine(const Trajectory& /*history*/, const Environment& env, const Policy& policy,
                                 std::string_view rejected, const CritiqueRecord& /*record*/, CounterRng& rng) const
{
    auto const candidates = env.candidate_actions();
    if (candidates.empty() || (candidates.size() == 1 && candidates.front() == rejected))
        throw Error(Errc::NoAlternativeAction, fmt::format("no alternative to '{}'", rejected));

    bool const best = rng.uniform() < _fidelity;
    if (best)
    {
        std::size_t pick = 0;
        int top = -1;
        for (std::size_t i = 0; i < candidates.size(); ++i)
        {
            int const v = env.oracle_step_value(candidates[i]);
            if (v > top)
            {
                top = v;
                pick = i;
            }
        }
        return {candidates[pick], text_units(candidates[pick])};
    }
    auto alt = policy.decide_excluding(env, rejected, rng);
    if (!alt)
        throw Error(Errc::NoAlternativeAction, fmt::format("no alternative to '{}'", rejected));
    return {alt->action, alt->units};
}

std::vector<DeltaBucket> refinement_delta_study(const std::vector<StudyStep>& steps, const Critic& critic,
                                                const Refiner& refiner, const Policy& policy, CounterRng rng)
{
    std::vector<DeltaBucket> buckets(10);
    std::vector<double> sums(10, 0.0);
    for (int s = 0; s < 10; ++s)
        buckets[static_cast<std::size_t>(s)].original_score = s;

    for (auto const& step: steps)
    {
        if (step.score < 0 || step.score >= 10)
            throw Error(Errc::DomainError, fmt::format("study step score {} outside [0,9]", step.score));
        CritiqueRecord original;
        original.score = step.score;

        Refinement refined;
        try
        {
            refined = refiner.refine(step.history, *step.env, policy, step.action, original, rng);
        }
        catch (const Error& e)
        {
            if (e.code() != Errc::NoAlternativeAction)
                throw;
            continue;
        }

        std::optional<std::string> next_obs;
        if (critic.reversible())
        {
            auto probe = step.env->clone();
            next_obs = probe->step(refined.action).observation;
        }
        auto const rescored = critic.evaluate(step.history, *step.env, refined.action, next_obs, rng);
        int const delta = rescored.score - step.score;

        auto& b = buckets[static_cast<std::size_t>(step.score)];
        b.count += 1;
        b.distribution[delta] += 1;
        sums[static_cast<std::size_t>(step.score)] += delta;
    }
    for (std::size_t s = 0; s < buckets.size(); ++s)
        if (buckets[s].count > 0)
            buckets[s].mean_delta = sums[s] / static_cast<double>(buckets[s].count);
    return buckets;
}

} // namespace proceed
