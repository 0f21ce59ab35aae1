// SPDX-License-Identifier: Apache-2.0
// Shared builders for the unit and acceptance tests.
#pragma once

#include "proceed/corridor_env.hpp"
#include "proceed/optimizer.hpp"
#include "proceed/policy.hpp"
#include "proceed/rng.hpp"
#include "proceed/tasks.hpp"
#include "proceed/trajectory.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace proceed::testing
{

/// Rooms 0-1-2-3 in a line with trap rooms 4 off room 1 and 5 off room 0.
/// The key starts in room 0, the vase in room 3 behind the door 2|3, the
/// goal is room 2. Optimal plan: take key, 1, 2, open door, 3, take vase, 2,
/// place vase. Every state on the plan offers a losing move.
inline CorridorTask six_room_task()
{
    CorridorTask t;
    t.id = "six-room";
    t.room_count = 6;
    t.room_graph = {{1, 5}, {0, 2, 4}, {1, 3}, {2}, {1}, {0}};
    t.start_room = 0;
    t.door = {2, 3};
    t.goal_room = 2;
    t.object_name = "vase";
    t.trap_rooms = {4, 5};
    t.initial_placement = {{"key", 0}, {"vase", 3}};
    t.subgoal_sequence = corridor_subgoals("vase");
    t.max_steps = 50;
    return t;
}

inline std::unique_ptr<CorridorEnv> six_room_env()
{
    return std::make_unique<CorridorEnv>(std::make_shared<const CorridorTask>(six_room_task()));
}

inline std::vector<std::string> six_room_plan()
{
    return {"take key", "go to room 1", "go to room 2", "open door", "go to room 3", "take vase", "go to room 2",
            "place vase"};
}

inline SearchTask search_task(int hops, double noise, std::uint64_t seed = 11)
{
    TaskGenOptions o;
    o.kind = EnvKind::Search;
    o.count = 1;
    o.difficulty = hops;
    o.seed = seed;
    o.noise_level = noise;
    return std::get<SearchTask>(generate_tasks(o).front());
}

/// Picks the candidate with the lowest oracle value (first on ties).
class WorstPolicy final : public Policy
{
public:
    [[nodiscard]] PolicyDecision decide(const Environment& env, CounterRng& /*rng*/) const override
    {
        return pick(env, {});
    }
    [[nodiscard]] std::optional<PolicyDecision> decide_excluding(const Environment& env, std::string_view excluded,
                                                                 CounterRng& /*rng*/) const override
    {
        auto d = pick(env, excluded);
        if (d.action.empty())
            return std::nullopt;
        return d;
    }
    [[nodiscard]] std::optional<double> logprob(const Environment& /*env*/, std::string_view /*action*/) const override
    {
        return std::nullopt;
    }
    [[nodiscard]] std::string id() const override { return "worst"; }

private:
    static PolicyDecision pick(const Environment& env, std::string_view excluded)
    {
        PolicyDecision d;
        d.units = 1;
        int best = std::numeric_limits<int>::max();
        for (auto const& a: env.candidate_actions())
        {
            if (a == excluded)
                continue;
            int const v = env.oracle_step_value(a);
            if (v < best)
            {
                best = v;
                d.action = a;
            }
        }
        return d;
    }
};

inline std::string random_text(CounterRng& rng)
{
    static constexpr std::array<std::string_view, 17> tokens{
        "a", "b", "X", " ", "0", "9", "\"", "\\", "/", "{", "}", "[", "]", ",", "\n", "\t", "\xc3\xa9"};
    std::string s;
    auto const n = rng.below(24);
    for (std::uint64_t i = 0; i < n; ++i)
        s += tokens[rng.below(tokens.size())];
    return s;
}

/// Random buffer satisfying every trajectory invariant; no decision contexts.
inline RolloutBuffer random_buffer(CounterRng& rng)
{
    RolloutBuffer buffer;
    buffer.policy_snapshot_id = fmt::format("policy-{}", rng.below(1000));
    auto const groups = rng.below(4);
    for (std::uint64_t g = 0; g < groups; ++g)
    {
        Group group;
        group.task_id = fmt::format("task-{}-{}", g, random_text(rng));
        auto const size = 1 + rng.below(4);
        for (std::uint64_t k = 0; k < size; ++k)
        {
            Trajectory t;
            t.task_id = group.task_id;
            t.mode = rng.bernoulli(0.5) ? RolloutMode::ProCeed : RolloutMode::Vanilla;
            t.seed = rng.next_u64();
            auto const steps = rng.below(6);
            for (std::uint64_t i = 0; i < steps; ++i)
            {
                StepRecord s;
                s.index = i;
                s.state_text = random_text(rng);
                s.action = random_text(rng);
                if (rng.bernoulli(0.8))
                    s.observation = random_text(rng);
                if (t.mode == RolloutMode::ProCeed && rng.bernoulli(0.7))
                {
                    s.critic_score = static_cast<int>(rng.below(11));
                    if (rng.bernoulli(0.5))
                        s.critique = random_text(rng);
                    if (rng.bernoulli(0.4))
                        s.tag = StepTag::Demonstration;
                }
                if (rng.bernoulli(0.7))
                    s.behavior_logprob = -rng.uniform() * 10.0;
                s.policy_units = static_cast<std::int64_t>(rng.below(500));
                s.critic_units = static_cast<std::int64_t>(rng.below(500));
                t.steps.push_back(std::move(s));
            }
            t.done = rng.bernoulli(0.9);
            t.reward = t.done && rng.bernoulli(0.5) ? 1.0 : 0.0;
            group.trajectories.push_back(std::move(t));
        }
        buffer.groups.push_back(std::move(group));
    }
    return buffer;
}

/// Random buffer whose steps carry synthetic decision contexts of width
/// `dim`, mixing on-policy and demonstration steps, successes and failures.
inline RolloutBuffer random_training_buffer(CounterRng& rng, std::size_t dim)
{
    RolloutBuffer buffer;
    auto const groups = 2 + rng.below(3);
    for (std::uint64_t g = 0; g < groups; ++g)
    {
        Group group;
        group.task_id = fmt::format("g{}", g);
        auto const size = 2 + rng.below(4);
        for (std::uint64_t k = 0; k < size; ++k)
        {
            Trajectory t;
            t.task_id = group.task_id;
            t.mode = rng.bernoulli(0.5) ? RolloutMode::ProCeed : RolloutMode::Vanilla;
            auto const steps = 1 + rng.below(4);
            for (std::uint64_t i = 0; i < steps; ++i)
            {
                auto ctx = std::make_shared<DecisionContext>();
                ctx->dim = dim;
                auto const n = 1 + rng.below(5);
                for (std::uint64_t c = 0; c < n; ++c)
                {
                    ctx->candidates.push_back(fmt::format("a{}", c));
                    for (std::size_t d = 0; d < dim; ++d)
                        ctx->features.push_back(rng.uniform() * 2.0 - 1.0);
                }
                StepRecord s;
                s.index = i;
                s.action_index = rng.below(n);
                s.action = ctx->candidates[s.action_index];
                s.decision = ctx;
                if (t.mode == RolloutMode::ProCeed)
                {
                    s.critic_score = static_cast<int>(rng.below(11));
                    if (rng.bernoulli(0.4))
                        s.tag = StepTag::Demonstration;
                }
                t.steps.push_back(std::move(s));
            }
            t.done = true;
            t.reward = rng.bernoulli(0.5) ? 1.0 : 0.0;
            group.trajectories.push_back(std::move(t));
        }
        if (g == 0)
        {
            group.trajectories[0].reward = 1.0;
            group.trajectories[1].reward = 0.0;
        }
        buffer.groups.push_back(std::move(group));
    }
    return buffer;
}

inline PolicyParams random_params(CounterRng& rng, std::size_t dim, double scale)
{
    PolicyParams p;
    p.feature_map_id = "synthetic";
    p.temperature = 0.5 + rng.uniform();
    for (std::size_t d = 0; d < dim; ++d)
        p.theta.push_back((rng.uniform() * 2.0 - 1.0) * scale);
    return p;
}

/// Relative error between the analytic surrogate gradient and central
/// differences of the objective with the clip branches frozen.
inline double gradient_check(const RolloutBuffer& buffer, const PolicyParams& params, const PolicyParams& old,
                             const OptimConfig& config, double h = 1e-5)
{
    auto const base = surrogate_and_gradient(buffer, params, old, config);
    std::vector<double> fd(params.theta.size());
    for (std::size_t k = 0; k < fd.size(); ++k)
    {
        auto up = params;
        auto down = params;
        up.theta[k] += h;
        down.theta[k] -= h;
        double const fu = surrogate_and_gradient(buffer, up, old, config, nullptr, &base.branches).objective;
        double const fdn = surrogate_and_gradient(buffer, down, old, config, nullptr, &base.branches).objective;
        fd[k] = (fu - fdn) / (2.0 * h);
    }
    double diff = 0.0;
    double ref = 0.0;
    for (std::size_t k = 0; k < fd.size(); ++k)
    {
        diff += (base.gradient[k] - fd[k]) * (base.gradient[k] - fd[k]);
        ref += fd[k] * fd[k];
    }
    return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-8);
}

/// Re-steps the recorded actions from a fresh reset and counts the steps
/// whose observation differs from the recorded one.
inline std::size_t replay_mismatches(const Trajectory& traj, const Environment& prototype)
{
    auto env = prototype.clone();
    env->reset(traj.seed);
    std::size_t bad = 0;
    for (auto const& s: traj.steps)
    {
        if (env->done() || env->observation() != s.state_text)
            return traj.steps.size();
        if (env->step(s.action).observation != s.observation.value_or(""))
            ++bad;
    }
    if (traj.done && env->success() != (traj.reward == 1.0))
        ++bad;
    return bad;
}

} // namespace proceed::testing
