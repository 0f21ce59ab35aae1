// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "proceed/critic.hpp"
#include "proceed/environment.hpp"
#include "proceed/policy.hpp"
#include "proceed/trajectory.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace proceed
{

struct RolloutConfig
{
    int group_size = 8;
    /// Fraction of each group collected with the ProCeed loop (ceiling rule).
    double proceed_fraction = 0.5;
    /// Step cap; non-positive defers to the environment's own budget.
    int max_steps = 0;
    /// Threshold, reversibility and refinement budget.
    CriticConfig critic;
    /// When false the ProCeed loop never calls the critic and degenerates
    /// to vanilla sampling.
    bool rewind_enabled = true;
    /// Re-step the environment after a kept probe instead of committing the
    /// probe transition (resamples stochastic observations).
    bool literal_double_step = false;
    std::uint64_t seed = 0;
    int workers = 1;
};

/// Throws DomainError.
void validate(const RolloutConfig& config);

/// ceil(g * fraction).
int proceed_slots(const RolloutConfig& config) noexcept;

/// Independent repeated sampling: sample -> step until done or budget.
/// Resets `env` with `seed`; policy draws come from a stream keyed by `seed`.
Trajectory vanilla_rollout(const Policy& policy, Environment& env, std::uint64_t seed, int max_steps = 0);

/// Critic-guided rollout with rewind and refinement. Resets `env` with `seed`.
Trajectory proceed_rollout(const Policy& policy, const Critic& critic, const Refiner& refiner, Environment& env,
                           std::uint64_t seed, const RolloutConfig& config);

/// Everything needed to collect ProCeed trajectories.
struct CriticSuite
{
    const Critic* critic = nullptr;
    const Refiner* refiner = nullptr;
};

/// ceil(g * fraction) ProCeed trajectories (slots 0..) followed by vanilla
/// ones, each seeded from (config.seed, task id, slot).
Group collect_group(const Environment& prototype, const Policy& policy, CriticSuite suite,
                    const RolloutConfig& config);

/// One group per prototype, collected by `config.workers` threads. Output
/// order is by task then slot regardless of completion order.
RolloutBuffer collect_batch(std::span<const Environment* const> prototypes, const Policy& policy, CriticSuite suite,
                            const RolloutConfig& config);

/// 1 + (mean per-step critic units) / (mean per-step policy units).
/// Throws ZeroPolicyUnits.
double cost_ratio(std::span<const Trajectory> trajectories);
double cost_ratio(double mean_policy_units, double mean_critic_units);

} // namespace proceed
