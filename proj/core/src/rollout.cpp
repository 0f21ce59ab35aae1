// SPDX-License-Identifier: Apache-2.0
#include "proceed/rollout.hpp"

#include "proceed/error.hpp"
#include "proceed/rng.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace proceed
{

void validate(const RolloutConfig& config)
{
    if (config.group_size < 1)
        throw Error(Errc::DomainError, fmt::format("group size must be >= 1, got {}", config.group_size));
    if (config.proceed_fraction < 0.0 || config.proceed_fraction > 1.0)
        throw Error(Errc::DomainError, fmt::format("proceed fraction {} outside [0,1]", config.proceed_fraction));
    if (config.workers < 1)
        throw Error(Errc::DomainError, "workers must be >= 1");
    validate(config.critic);
}

int proceed_slots(const RolloutConfig& config) noexcept
{
    // The epsilon keeps products like 10 * 0.3 from rounding up past an integer.
    return static_cast<int>(std::ceil(config.group_size * config.proceed_fraction - 1e-9));
}

namespace
{

int step_cap(const Environment& env, int max_steps)
{
    return max_steps > 0 ? std::min(max_steps, env.max_steps()) : env.max_steps();
}

StepRecord on_policy_step(std::size_t index, const Environment& env, PolicyDecision decision)
{
    StepRecord s;
    s.index = index;
    s.state_text = env.observation();
    s.action = std::move(decision.action);
    s.tag = StepTag::OnPolicy;
    s.behavior_logprob = decision.logprob;
    s.policy_units = decision.units;
    s.decision = std::move(decision.context);
    s.action_index = decision.action_index;
    return s;
}

} // namespace

Trajectory vanilla_rollout(const Policy& policy, Environment& env, std::uint64_t seed, int max_steps)
{
    env.reset(seed);
    auto policy_rng = CounterRng(seed).split("policy");
    Trajectory traj{env.task_id(), {}, 0.0, false, RolloutMode::Vanilla, seed};
    int const cap = step_cap(env, max_steps);

    while (!env.done() && static_cast<int>(traj.steps.size()) < cap)
    {
        auto step = on_policy_step(traj.steps.size(), env, policy.decide(env, policy_rng));
        step.observation = env.step(step.action).observation;
        append_step_inplace(traj, std::move(step));
    }
    finalize_inplace(traj, env.success());
    return traj;
}

Trajectory proceed_rollout(const Policy& policy, const Critic& critic, const Refiner& refiner, Environment& env,
                           std::uint64_t seed, const RolloutConfig& config)
{
    env.reset(seed);
    CounterRng const root(seed);
    auto policy_rng = root.split("policy");
    auto critic_rng = root.split("critic");
    auto refiner_rng = root.split("refiner");
    Trajectory traj{env.task_id(), {}, 0.0, false, RolloutMode::ProCeed, seed};
    int const cap = step_cap(env, config.max_steps);
    bool const can_refine = config.critic.max_refinements_per_step > 0;

    while (!env.done() && static_cast<int>(traj.steps.size()) < cap)
    {
        auto step = on_policy_step(traj.steps.size(), env, policy.decide(env, policy_rng));
        if (!config.rewind_enabled)
        {
            step.observation = env.step(step.action).observation;
            append_step_inplace(traj, std::move(step));
            continue;
        }

        std::optional<StepOutcome> probe;
        std::unique_ptr<Environment> before;
        Snapshot snap;
        if (critic.reversible())
        {
            before = env.clone();
            snap = env.snapshot();
            probe = env.step(step.action);
        }
        auto const& at_state = before ? *before : env;
        auto const record = critic.evaluate(traj, at_state, step.action,
                                            probe ? std::optional<std::string>(probe->observation) : std::nullopt,
                                            critic_rng);
        step.critic_score = record.score;
        step.critique = record.critique;
        step.critic_units = record.units;

        std::optional<std::string> chosen;
        if (can_refine && should_rewind(record, config.critic))
        {
            if (probe)
                env.restore(snap);
            try
            {
                auto refined = refiner.refine(traj, env, policy, step.action, record, refiner_rng);
                step.critic_units += refined.units;
                chosen = std::move(refined.action);
            }
            catch (const Error& e)
            {
                if (e.code() != Errc::NoAlternativeAction)
                    throw;
                spdlog::debug("task {} step {}: {}; keeping the original action", traj.task_id, step.index, e.what());
            }
            if (!chosen && probe)
                probe.reset(); // restored above; the original action is re-applied below
        }

        if (chosen)
        {
            step.tag = StepTag::Demonstration;
            step.behavior_logprob = policy.logprob(env, *chosen);
            if (step.decision)
            {
                step.action_index = step.decision->index_of(*chosen);
                if (step.action_index == step.decision->size())
                    step.decision.reset();
            }
            step.action = std::move(*chosen);
            step.observation = env.step(step.action).observation;
        }
        else if (probe && !config.literal_double_step)
        {
            step.observation = probe->observation;
        }
        else
        {
            if (probe)
            {
                // Literal reading: rewind the state but keep the advanced RNG stream.
                auto const position = env.rng_position();
                env.restore(snap);
                env.set_rng_position(position);
            }
            step.observation = env.step(step.action).observation;
        }
        append_step_inplace(traj, std::move(step));
    }
    finalize_inplace(traj, env.success());
    return traj;
}

Group collect_group(const Environment& prototype, const Policy& policy, CriticSuite suite,
                    const RolloutConfig& config)
{
    Environment const* protos[] = {&prototype};
    auto buffer = collect_batch(protos, policy, suite, config);
    return std::move(buffer.groups.front());
}

RolloutBuffer collect_batch(std::span<const Environment* const> prototypes, const Policy& policy, CriticSuite suite,
                            const RolloutConfig& config)
{
    validate(config);
    int const n_proceed = proceed_slots(config);
    if (n_proceed > 0 && (!suite.critic || !suite.refiner))
        throw Error(Errc::ContractViolation, "ProCeed slots requested without a critic and refiner");

    auto const g = static_cast<std::size_t>(config.group_size);
    RolloutBuffer buffer;
    buffer.policy_snapshot_id = policy.id();
    buffer.groups.resize(prototypes.size());
    for (std::size_t i = 0; i < prototypes.size(); ++i)
    {
        buffer.groups[i].task_id = prototypes[i]->task_id();
        buffer.groups[i].trajectories.resize(g);
    }

    std::size_t const jobs = prototypes.size() * g;
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&] {
        for (std::size_t job = next++; job < jobs; job = next++)
        {
            auto const task = job / g;
            auto const slot = job % g;
            try
            {
                auto env = prototypes[task]->clone();
                auto const seed = derive_seed(config.seed, env->task_id(), slot);
                buffer.groups[task].trajectories[slot] =
                    static_cast<int>(slot) < n_proceed
                        ? proceed_rollout(policy, *suite.critic, *suite.refiner, *env, seed, config)
                        : vanilla_rollout(policy, *env, seed, config.max_steps);
            }
            catch (...)
            {
                std::lock_guard lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
                next = jobs;
            }
        }
    };

    auto const threads = std::min<std::size_t>(static_cast<std::size_t>(config.workers), jobs);
    if (threads <= 1)
    {
        worker();
    }
    else
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back(worker);
    }
    if (failure)
        std::rethrow_exception(failure);
    return buffer;
}

double cost_ratio(double mean_policy_units, double mean_critic_units)
{
    if (!(mean_policy_units > 0.0))
        throw Error(Errc::ZeroPolicyUnits, "average policy units must be positive");
    return 1.0 + mean_critic_units / mean_policy_units;
}

double cost_ratio(std::span<const Trajectory> trajectories)
{
    double policy_units = 0.0;
    double critic_units = 0.0;
    std::size_t steps = 0;
    for (auto const& t: trajectories)
        for (auto const& s: t.steps)
        {
            policy_units += static_cast<double>(s.policy_units);
            critic_units += static_cast<double>(s.critic_units);
            ++steps;
        }
    if (steps == 0)
        throw Error(Errc::ZeroPolicyUnits, "no steps to average over");
    return cost_ratio(policy_units / static_cast<double>(steps), critic_units / static_cast<double>(steps));
}

} // namespace proceed
