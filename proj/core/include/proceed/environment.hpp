// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "proceed/decision.hpp"

#include <any>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace proceed
{

enum class EnvKind
{
    Search,
    Corridor,
};

std::string_view to_string(EnvKind kind) noexcept;
EnvKind env_kind_from_string(std::string_view name);

/// Default step budgets: 10 for search, 50 for corridor.
constexpr int default_max_steps(EnvKind kind) noexcept
{
    return kind == EnvKind::Search ? 10 : 50;
}

struct StepOutcome
{
    std::string observation;
    bool done = false;
    bool success = false;
};

/// Full copy of an environment's state, including its RNG stream position.
/// Only the environment that produced it can interpret the payload.
struct Snapshot
{
    std::any state;
};

/// Environment contract. Instances are single-threaded; run separate
/// instances on separate threads.
class Environment
{
public:
    virtual ~Environment() = default;

    [[nodiscard]] virtual EnvKind kind() const noexcept = 0;
    [[nodiscard]] virtual const std::string& task_id() const noexcept = 0;

    /// Deterministic in (task, seed). Returns the initial observation.
    virtual std::string reset(std::uint64_t seed) = 0;

    /// Throws StepAfterDone, and InadmissibleAction for actions outside
    /// candidate_actions() in environments that enforce admissibility.
    virtual StepOutcome step(std::string_view action) = 0;

    [[nodiscard]] virtual Snapshot snapshot() const = 0;
    virtual void restore(const Snapshot& snap) = 0;
    [[nodiscard]] virtual std::unique_ptr<Environment> clone() const = 0;

    /// Agent-visible rendering of the current state s_t.
    [[nodiscard]] virtual std::string observation() const = 0;
    /// Static task text for prompts (question or household task).
    [[nodiscard]] virtual std::string task_description() const = 0;
    /// Layout/configuration text for prompts.
    [[nodiscard]] virtual std::string environment_config() const = 0;

    [[nodiscard]] virtual std::vector<std::string> candidate_actions() const = 0;
    /// Candidates plus agent-perspective features, |f_i| <= 1.
    [[nodiscard]] virtual DecisionContext decision_context() const = 0;
    [[nodiscard]] virtual std::string_view feature_map_id() const noexcept = 0;
    [[nodiscard]] virtual std::size_t feature_dim() const noexcept = 0;

    /// Exact 0-10 value of taking `action` in the current state.
    [[nodiscard]] virtual int oracle_step_value(std::string_view action) const = 0;

    /// Independent re-check of the gold predicate on the current state.
    [[nodiscard]] virtual bool verify_success() const = 0;

    [[nodiscard]] virtual bool done() const noexcept = 0;
    [[nodiscard]] virtual bool success() const noexcept = 0;
    [[nodiscard]] virtual int steps_taken() const noexcept = 0;
    [[nodiscard]] virtual int max_steps() const noexcept = 0;

    [[nodiscard]] virtual std::uint64_t rng_position() const noexcept = 0;
    virtual void set_rng_position(std::uint64_t position) noexcept = 0;
};

} // namespace proceed
