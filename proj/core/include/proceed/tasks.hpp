// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "proceed/corridor_env.hpp"
#include "proceed/search_env.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <variant>
#include <vector>

namespace proceed
{

using Task = std::variant<SearchTask, CorridorTask>;

EnvKind kind_of(const Task& task) noexcept;
const std::string& id_of(const Task& task) noexcept;

struct TaskGenOptions
{
    EnvKind kind = EnvKind::Search;
    int count = 1;
    /// Hop count for search (2-4), optimal plan length for corridor (>= 6).
    int difficulty = 2;
    std::uint64_t seed = 0;
    /// Search only.
    double noise_level = 0.5;
    /// Non-positive selects the per-kind default.
    int max_steps = 0;
    /// Task ids are "<prefix>-<index>"; defaults to "<kind>-<seed>".
    std::string id_prefix;
};

/// Deterministic in the options. Throws InvalidTask on impossible settings.
std::vector<Task> generate_tasks(const TaskGenOptions& options);

/// Task-file JSON (array of task objects tagged by "kind").
std::string tasks_to_json(const std::vector<Task>& tasks);
std::vector<Task> tasks_from_json(std::string_view text);
void save_tasks(const std::filesystem::path& path, const std::vector<Task>& tasks);
std::vector<Task> load_tasks(const std::filesystem::path& path);

/// Fresh environment for a task (not yet reset).
std::unique_ptr<Environment> make_environment(const Task& task);

/// Overrides applied after loading or generating: noise for search tasks,
/// max steps for both. Negative/zero values leave the task unchanged.
void apply_overrides(std::vector<Task>& tasks, std::optional<double> noise_level, std::optional<int> max_steps);

} // namespace proceed
