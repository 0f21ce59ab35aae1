// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "proceed/decision.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace proceed
{

enum class StepTag
{
    OnPolicy,
    Demonstration,
};

enum class RolloutMode
{
    Vanilla,
    ProCeed,
};

std::string_view to_string(StepTag tag) noexcept;
std::string_view to_string(RolloutMode mode) noexcept;

struct StepRecord
{
    std::size_t index = 0;
    std::string state_text;
    std::string action;
    std::optional<std::string> observation;
    StepTag tag = StepTag::OnPolicy;
    std::optional<int> critic_score;
    std::optional<std::string> critique;
    /// Log-probability of `action` under the collection-time policy snapshot.
    /// Absent for backends that do not report log-probabilities.
    std::optional<double> behavior_logprob;
    std::int64_t policy_units = 0;
    std::int64_t critic_units = 0;

    /// In-memory only: the decision the policy faced at this step, used to
    /// re-evaluate probabilities during optimization. Not persisted and not
    /// part of equality.
    std::shared_ptr<const DecisionContext> decision;
    std::size_t action_index = 0;

    friend bool operator==(const StepRecord& a, const StepRecord& b);
};

struct Trajectory
{
    std::string task_id;
    std::vector<StepRecord> steps;
    double reward = 0.0;
    bool done = false;
    RolloutMode mode = RolloutMode::Vanilla;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t demonstration_count() const noexcept;

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct Group
{
    std::string task_id;
    std::vector<Trajectory> trajectories;

    friend bool operator==(const Group&, const Group&) = default;
};

struct RolloutBuffer
{
    std::vector<Group> groups;
    std::string policy_snapshot_id;

    friend bool operator==(const RolloutBuffer&, const RolloutBuffer&) = default;
};

struct GroupRewardStats
{
    double mean = 0.0;
    double std = 0.0;
    bool degenerate = true;
};

/// Throws AppendAfterDone or IndexGap.
Trajectory append_step(Trajectory traj, StepRecord step);
void append_step_inplace(Trajectory& traj, StepRecord step);

/// Marks the trajectory done with reward 1 on success, 0 otherwise.
/// Throws DoubleFinalize.
Trajectory finalize(Trajectory traj, bool success);
void finalize_inplace(Trajectory& traj, bool success);

/// Population mean/std of terminal rewards. Throws EmptyGroup.
GroupRewardStats group_reward_stats(const Group& group);

/// Checks every trajectory-level invariant; throws InvariantViolation.
void validate(const Trajectory& traj);
void validate(const Group& group, std::optional<std::size_t> expected_size = std::nullopt);
void validate(const RolloutBuffer& buffer);

// JSONL persistence: one trajectory per line. Lines carry the documented
// keys plus `done`, `group` and `policy_snapshot_id` so that group structure
// survives the round trip.
std::string serialize_jsonl(const RolloutBuffer& buffer);
void write_jsonl(std::ostream& out, const RolloutBuffer& buffer);
/// Throws RecordError (MalformedRecord with line number) or InvariantViolation.
RolloutBuffer parse_jsonl(std::string_view text);
RolloutBuffer read_jsonl(std::istream& in);

std::string trajectory_to_json(const Trajectory& traj);

} // namespace proceed
