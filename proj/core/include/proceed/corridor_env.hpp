// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "proceed/environment.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace proceed
{

/// Household-style corridor: fetch the key, unlock the door, carry the
/// object to the goal room. Side rooms in `trap_rooms` are dead ends holding
/// a lure that wastes steps.
struct CorridorTask
{
    std::string id;
    int room_count = 0;
    /// Undirected adjacency, one entry per room.
    std::vector<std::vector<int>> room_graph;
    int start_room = 0;
    /// Locked door between these two adjacent rooms, opened from `first`.
    std::pair<int, int> door{0, 1};
    int goal_room = 0;
    std::string object_name = "vase";
    std::vector<int> trap_rooms;
    /// "key" and object_name -> room.
    std::map<std::string, int> initial_placement;
    std::vector<std::string> subgoal_sequence;
    int max_steps = default_max_steps(EnvKind::Corridor);

    [[nodiscard]] int key_room() const { return initial_placement.at("key"); }
    [[nodiscard]] int object_room() const { return initial_placement.at(object_name); }

    friend bool operator==(const CorridorTask&, const CorridorTask&) = default;
};

/// Throws InvalidTask.
void validate(const CorridorTask& task);

/// The fixed subgoal sequence for an object name.
std::vector<std::string> corridor_subgoals(const std::string& object_name);

struct CorridorState
{
    int room = 0;
    int previous_room = -1;
    bool has_key = false;
    bool door_open = false;
    /// Room holding the object, or -1 while carried.
    int object_location = 0;
    std::vector<bool> visited;
    int steps_taken = 0;
    bool done = false;
    bool success = false;
    std::string last_observation;
    std::uint64_t rng_position = 0;

    friend bool operator==(const CorridorState&, const CorridorState&) = default;
};

/// Optimal remaining plan lengths over the full (room, key, door, object)
/// state space, computed once per task by reverse breadth-first search.
class CorridorPlanner
{
public:
    static constexpr int kUnreachable = 1 << 20;

    explicit CorridorPlanner(const CorridorTask& task);

    /// Optimal number of actions from `state` to success.
    [[nodiscard]] int remaining(const CorridorState& state) const;
    [[nodiscard]] int remaining(int room, bool has_key, bool door_open, int object_location) const;

    /// Shortest path lengths between rooms ignoring the door.
    [[nodiscard]] int room_distance(int from, int to) const;

private:
    [[nodiscard]] std::size_t index(int room, bool has_key, bool door_open, int object_location) const;

    int _rooms;
    std::vector<int> _remaining;
    std::vector<int> _room_distance;
};

class CorridorEnv final : public Environment
{
public:
    static constexpr std::size_t kFeatureDim = 8;
    static constexpr std::string_view kFeatureMapId = "corridor-v1";

    explicit CorridorEnv(std::shared_ptr<const CorridorTask> task);

    [[nodiscard]] EnvKind kind() const noexcept override { return EnvKind::Corridor; }
    [[nodiscard]] const std::string& task_id() const noexcept override { return _task->id; }
    [[nodiscard]] const CorridorTask& task() const noexcept { return *_task; }
    [[nodiscard]] const CorridorState& state() const noexcept { return _state; }
    [[nodiscard]] const CorridorPlanner& planner() const noexcept { return *_planner; }

    std::string reset(std::uint64_t seed) override;
    StepOutcome step(std::string_view action) override;

    [[nodiscard]] Snapshot snapshot() const override;
    void restore(const Snapshot& snap) override;
    [[nodiscard]] std::unique_ptr<Environment> clone() const override;

    [[nodiscard]] std::string observation() const override { return _state.last_observation; }
    [[nodiscard]] std::string task_description() const override;
    [[nodiscard]] std::string environment_config() const override;

    [[nodiscard]] std::vector<std::string> candidate_actions() const override;
    [[nodiscard]] DecisionContext decision_context() const override;
    [[nodiscard]] std::string_view feature_map_id() const noexcept override { return kFeatureMapId; }
    [[nodiscard]] std::size_t feature_dim() const noexcept override { return kFeatureDim; }

    [[nodiscard]] int oracle_step_value(std::string_view action) const override;
    [[nodiscard]] bool verify_success() const override;

    [[nodiscard]] bool done() const noexcept override { return _state.done; }
    [[nodiscard]] bool success() const noexcept override { return _state.success; }
    [[nodiscard]] int steps_taken() const noexcept override { return _state.steps_taken; }
    [[nodiscard]] int max_steps() const noexcept override { return _task->max_steps; }

    [[nodiscard]] std::uint64_t rng_position() const noexcept override { return _state.rng_position; }
    void set_rng_position(std::uint64_t position) noexcept override { _state.rng_position = position; }

    /// Deterministic successor of `state` under `action`; nullopt if inadmissible.
    [[nodiscard]] std::optional<CorridorState> transition(const CorridorState& state, std::string_view action) const;

private:
    [[nodiscard]] std::vector<std::string> admissible(const CorridorState& state) const;
    [[nodiscard]] int subgoal_target(const CorridorState& state) const;
    [[nodiscard]] std::string render(const CorridorState& state, std::string_view event) const;
    [[nodiscard]] bool is_trap(int room) const;

    std::shared_ptr<const CorridorTask> _task;
    std::shared_ptr<const CorridorPlanner> _planner;
    CorridorState _state;
};

} // namespace proceed
