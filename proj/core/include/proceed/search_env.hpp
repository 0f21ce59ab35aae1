// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "proceed/environment.hpp"
#include "proceed/rng.hpp"

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace proceed
{

struct Fact
{
    std::string subject;
    std::string relation;
    std::string object;

    friend bool operator==(const Fact&, const Fact&) = default;
};

/// Multi-hop lookup task: follow `chain` from its first subject to reach the
/// gold answer. Queries are answered by a noisy search tool whose snippets
/// may name misleading `distractor_entities`.
struct SearchTask
{
    std::string id;
    std::vector<Fact> knowledge_base;
    std::vector<Fact> chain;
    std::string question;
    std::string gold_answer;
    std::vector<std::string> distractor_entities;
    double noise_level = 0.0;
    int max_steps = default_max_steps(EnvKind::Search);

    [[nodiscard]] const std::string& anchor() const { return chain.front().subject; }
    [[nodiscard]] std::size_t hops() const noexcept { return chain.size(); }

    friend bool operator==(const SearchTask&, const SearchTask&) = default;
};

/// Throws InvalidTask.
void validate(const SearchTask& task);

/// Case-folded, whitespace-collapsed form used for answer matching.
std::string normalize_answer(std::string_view text);

struct SearchQuery
{
    std::string entity;
    std::string relation;
};

std::string format_search(std::string_view entity, std::string_view relation);
std::string format_answer(std::string_view entity);
std::optional<SearchQuery> parse_search(std::string_view action);
std::optional<std::string> parse_answer(std::string_view action);

/// Quality of a query against the next unresolved hop: 1 for matching
/// (entity, relation), 0.5 for entity only, 0 otherwise (also once every
/// hop is resolved).
double query_quality(const SearchTask& task, std::size_t resolved_hops, std::string_view entity,
                     std::string_view relation);

/// One result slot of the search tool.
struct Snippet
{
    Fact fact;
    bool is_true_fact = false;
};

/// Each of the 3 slots holds the true next-hop fact with probability
/// (1 - noise) * quality, otherwise a distractor naming an entity drawn
/// uniformly from the task's distractor set. Consumes exactly two draws
/// per slot.
std::array<Snippet, 3> search_noise_model(const SearchTask& task, std::size_t resolved_hops, const SearchQuery& query,
                                          double quality, double noise, CounterRng& rng);

/// Agent-perspective belief about one observed entity.
struct EntityBelief
{
    std::string name;
    /// Hop depth implied by the snippets that named it, -1 if inconsistent.
    int depth = -1;
    /// Number of result slots that named it (anchor starts at 3).
    int support = 0;
    /// Query (seen index, relation index) whose results first named it.
    std::optional<std::size_t> parent;
    std::size_t parent_relation = 0;
};

struct SearchState
{
    /// Hops the agent has built on: hop j counts once the agent searches
    /// from its object, so repeating the current query re-samples it.
    std::size_t resolved_hops = 0;
    std::vector<EntityBelief> seen;
    /// Issued queries as (seen index, relation index).
    std::vector<std::pair<std::size_t, std::size_t>> issued;
    std::string last_observation;
    std::optional<std::string> submitted_answer;
    int steps_taken = 0;
    bool done = false;
    bool success = false;
    std::uint64_t rng_key = 0;
    std::uint64_t rng_position = 0;
};

class SearchEnv final : public Environment
{
public:
    static constexpr std::size_t kFeatureDim = 9;
    static constexpr std::string_view kFeatureMapId = "search-v1";

    explicit SearchEnv(std::shared_ptr<const SearchTask> task);

    [[nodiscard]] EnvKind kind() const noexcept override { return EnvKind::Search; }
    [[nodiscard]] const std::string& task_id() const noexcept override { return _task->id; }
    [[nodiscard]] const SearchTask& task() const noexcept { return *_task; }
    [[nodiscard]] const SearchState& state() const noexcept { return _state; }

    std::string reset(std::uint64_t seed) override;
    StepOutcome step(std::string_view action) override;

    [[nodiscard]] Snapshot snapshot() const override;
    void restore(const Snapshot& snap) override;
    [[nodiscard]] std::unique_ptr<Environment> clone() const override;

    [[nodiscard]] std::string observation() const override { return _state.last_observation; }
    [[nodiscard]] std::string task_description() const override { return _task->question; }
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

private:
    void observe_snippet(const Fact& fact, std::size_t query_entity, std::size_t query_relation);
    [[nodiscard]] std::optional<std::size_t> seen_index(std::string_view name) const;
    [[nodiscard]] std::optional<std::size_t> relation_index(std::string_view relation) const;
    /// resolved_hops after a search from `entity` commits to its hop.
    [[nodiscard]] std::size_t frontier_for(std::string_view entity) const;
    /// Seen indices, deepest believed depth first (stable).
    [[nodiscard]] std::vector<std::size_t> entity_order() const;

    std::shared_ptr<const SearchTask> _task;
    std::vector<std::string> _relations;
    SearchState _state;
};

} // namespace proceed
