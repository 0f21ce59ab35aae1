// SPDX-License-Identifier: Apache-2.0
#include "proceed/search_env.hpp"

#include "proceed/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

namespace proceed
{

namespace
{

std::string_view trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
        s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
        s.remove_suffix(1);
    return s;
}

std::string render_snippets(const SearchQuery& query, const std::array<Snippet, 3>& snippets)
{
    std::string out = fmt::format("Results for {}:", format_search(query.entity, query.relation));
    for (std::size_t i = 0; i < snippets.size(); ++i)
    {
        auto const& f = snippets[i].fact;
        out += fmt::format("\n[{}] {} {} {}.", i + 1, f.subject, f.relation, f.object);
    }
    return out;
}

} // namespace

void validate(const SearchTask& task)
{
    auto fail = [&](const std::string& what) { throw Error(Errc::InvalidTask, fmt::format("{}: {}", task.id, what)); };
    if (task.id.empty())
        throw Error(Errc::InvalidTask, "search task without id");
    if (task.chain.empty())
        fail("empty chain");
    if (task.noise_level < 0.0 || task.noise_level > 1.0)
        fail(fmt::format("noise level {} outside [0,1]", task.noise_level));
    if (task.max_steps < 1)
        fail("max_steps must be positive");
    for (std::size_t i = 0; i < task.chain.size(); ++i)
    {
        if (std::find(task.knowledge_base.begin(), task.knowledge_base.end(), task.chain[i]) == task.knowledge_base.end())
            fail(fmt::format("chain fact {} missing from knowledge base", i));
        if (i > 0 && task.chain[i].subject != task.chain[i - 1].object)
            fail(fmt::format("chain breaks at hop {}", i));
    }
    if (normalize_answer(task.chain.back().object) != normalize_answer(task.gold_answer))
        fail("chain does not end at the gold answer");
    if (task.distractor_entities.empty())
        fail("no distractor entities");
    for (auto const& d: task.distractor_entities)
        if (normalize_answer(d) == normalize_answer(task.gold_answer))
            fail(fmt::format("distractor '{}' equals the gold answer", d));
    std::set<std::string> relations;
    for (auto const& f: task.chain)
        if (!relations.insert(f.relation).second)
            fail(fmt::format("relation '{}' repeats along the chain", f.relation));
}

std::string normalize_answer(std::string_view text)
{
    std::string out;
    bool pending_space = false;
    for (char c: trim(text))
    {
        if (std::isspace(static_cast<unsigned char>(c)))
        {
            pending_space = true;
            continue;
        }
        if (pending_space && !out.empty())
            out += ' ';
        pending_space = false;
        out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

std::string format_search(std::string_view entity, std::string_view relation)
{
    return fmt::format("Search({}, {})", entity, relation);
}

std::string format_answer(std::string_view entity)
{
    return fmt::format("Answer({})", entity);
}

std::optional<SearchQuery> parse_search(std::string_view action)
{
    action = trim(action);
    constexpr std::string_view prefix = "Search(";
    if (!action.starts_with(prefix) || !action.ends_with(")"))
        return std::nullopt;
    auto body = action.substr(prefix.size(), action.size() - prefix.size() - 1);
    auto const comma = body.rfind(',');
    if (comma == std::string_view::npos)
        return std::nullopt;
    auto entity = trim(body.substr(0, comma));
    auto relation = trim(body.substr(comma + 1));
    if (entity.empty() || relation.empty())
        return std::nullopt;
    return SearchQuery{std::string(entity), std::string(relation)};
}

std::optional<std::string> parse_answer(std::string_view action)
{
    action = trim(action);
    constexpr std::string_view prefix = "Answer(";
    if (!action.starts_with(prefix) || !action.ends_with(")"))
        return std::nullopt;
    return std::string(trim(action.substr(prefix.size(), action.size() - prefix.size() - 1)));
}

double query_quality(const SearchTask& task, std::size_t resolved_hops, std::string_view entity,
                     std::string_view relation)
{
    if (resolved_hops >= task.chain.size())
        return 0.0;
    auto const& hop = task.chain[resolved_hops];
    if (normalize_answer(entity) != normalize_answer(hop.subject))
        return 0.0;
    return normalize_answer(relation) == normalize_answer(hop.relation) ? 1.0 : 0.5;
}

std::array<Snippet, 3> search_noise_model(const SearchTask& task, std::size_t resolved_hops, const SearchQuery& query,
                                          double quality, double noise, CounterRng& rng)
{
    double const p_true = (1.0 - noise) * quality;
    std::array<Snippet, 3> out;
    for (auto& slot: out)
    {
        double const u = rng.uniform();
        auto const pick = rng.below(task.distractor_entities.size());
        if (resolved_hops < task.chain.size() && u < p_true)
            slot = Snippet{task.chain[resolved_hops], true};
        else
            slot = Snippet{Fact{query.entity, query.relation, task.distractor_entities[pick]}, false};
    }
    return out;
}

SearchEnv::SearchEnv(std::shared_ptr<const SearchTask> task): _task(std::move(task))
{
    if (!_task)
        throw Error(Errc::InvalidTask, "null search task");
    validate(*_task);
    for (auto const& f: _task->chain)
        _relations.push_back(f.relation);
}

std::string SearchEnv::reset(std::uint64_t seed)
{
    _state = SearchState{};
    _state.rng_key = combine_keys(hash_string(_task->id), seed);
    _state.seen.push_back(EntityBelief{_task->anchor(), 0, 3, std::nullopt, 0});
    _state.last_observation =
        fmt::format("Question: {}\nUse Search(entity, relation) to look up facts and Answer(entity) to finish.",
                    _task->question);
    return _state.last_observation;
}

std::optional<std::size_t> SearchEnv::seen_index(std::string_view name) const
{
    auto const key = normalize_answer(name);
    for (std::size_t i = 0; i < _state.seen.size(); ++i)
        if (normalize_answer(_state.seen[i].name) == key)
            return i;
    return std::nullopt;
}

std::size_t SearchEnv::frontier_for(std::string_view entity) const
{
    auto const j = _state.resolved_hops;
    if (j < _task->chain.size() && seen_index(entity) &&
        normalize_answer(entity) == normalize_answer(_task->chain[j].object))
        return j + 1;
    return j;
}

std::vector<std::size_t> SearchEnv::entity_order() const
{
    std::vector<std::size_t> order(_state.seen.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return _state.seen[a].depth > _state.seen[b].depth; });
    return order;
}

std::optional<std::size_t> SearchEnv::relation_index(std::string_view relation) const
{
    auto const key = normalize_answer(relation);
    for (std::size_t i = 0; i < _relations.size(); ++i)
        if (normalize_answer(_relations[i]) == key)
            return i;
    return std::nullopt;
}

void SearchEnv::observe_snippet(const Fact& fact, std::size_t query_entity, std::size_t query_relation)
{
    auto const subject = seen_index(fact.subject);
    auto const relation = relation_index(fact.relation);
    int depth = -1;
    if (subject && relation)
    {
        int const parent_depth = _state.seen[*subject].depth;
        if (parent_depth >= 0 && static_cast<std::size_t>(parent_depth) == *relation)
            depth = parent_depth + 1;
    }

    if (auto idx = seen_index(fact.object))
    {
        auto& belief = _state.seen[*idx];
        belief.support += 1;
        if (belief.depth < 0 && depth >= 0)
            belief.depth = depth;
        return;
    }
    EntityBelief belief{fact.object, depth, 1, std::nullopt, 0};
    if (subject && relation)
    {
        belief.parent = *subject;
        belief.parent_relation = *relation;
    }
    else
    {
        belief.parent = query_entity;
        belief.parent_relation = query_relation;
    }
    _state.seen.push_back(std::move(belief));
}

StepOutcome SearchEnv::step(std::string_view action)
{
    if (_state.done)
        throw Error(Errc::StepAfterDone, fmt::format("task '{}' already finished", _task->id));

    _state.steps_taken += 1;
    CounterRng rng(_state.rng_key, _state.rng_position);

    if (auto answer = parse_answer(action))
    {
        _state.submitted_answer = *answer;
        _state.done = true;
        _state.success = normalize_answer(*answer) == normalize_answer(_task->gold_answer);
        _state.last_observation = fmt::format("Answer submitted: {}. Episode finished.", *answer);
    }
    else if (auto query = parse_search(action))
    {
        _state.resolved_hops = frontier_for(query->entity);
        double const q = query_quality(*_task, _state.resolved_hops, query->entity, query->relation);
        auto const snippets = search_noise_model(*_task, _state.resolved_hops, *query, q, _task->noise_level, rng);

        auto const entity = seen_index(query->entity);
        auto const relation = relation_index(query->relation);
        std::size_t const qe = entity.value_or(_state.seen.size());
        std::size_t const qr = relation.value_or(_relations.size());
        if (entity && relation)
            _state.issued.emplace_back(*entity, *relation);

        for (auto const& s: snippets)
            observe_snippet(s.fact, qe, qr);
        _state.last_observation = render_snippets(*query, snippets);
    }
    else
    {
        _state.last_observation = fmt::format("Invalid action: {}", action);
    }

    _state.rng_position = rng.position();
    if (!_state.done && _state.steps_taken >= _task->max_steps)
    {
        _state.done = true;
        _state.last_observation += "\nStep budget exhausted.";
    }
    return {_state.last_observation, _state.done, _state.success};
}

Snapshot SearchEnv::snapshot() const
{
    return Snapshot{_state};
}

void SearchEnv::restore(const Snapshot& snap)
{
    _state = std::any_cast<const SearchState&>(snap.state);
}

std::unique_ptr<Environment> SearchEnv::clone() const
{
    return std::make_unique<SearchEnv>(*this);
}

std::string SearchEnv::environment_config() const
{
    return fmt::format("Search tool returns 3 snippets per query. Relations: {}. Step budget: {}.",
                       fmt::join(_relations, ", "), _task->max_steps);
}

std::vector<std::string> SearchEnv::candidate_actions() const
{
    auto const order = entity_order();
    std::vector<std::string> out;
    out.reserve(order.size() * (_relations.size() + 1));
    for (auto e: order)
        out.push_back(format_answer(_state.seen[e].name));
    for (auto e: order)
        for (auto const& r: _relations)
            out.push_back(format_search(_state.seen[e].name, r));
    return out;
}

// Features, all in [0, 1]:
//   0 query follows the entity's next relation along its believed chain
//   1 support of the target entity (slots naming it, capped at 3)
//   2 believed depth of the target entity / hops
//   3 answer action
//   4 answer naming an entity believed to be at full depth
//   5 repeat of a query whose results were ambiguous (top child leads by < 2)
//   6 repeat of a query whose results were clear (top child leads by >= 2)
//   7 answer action scaled by the spent step budget fraction
//   8 support margin of the target over its strongest sibling, capped at 3
DecisionContext SearchEnv::decision_context() const
{
    DecisionContext ctx;
    ctx.candidates = candidate_actions();
    ctx.dim = kFeatureDim;
    ctx.features.assign(ctx.candidates.size() * kFeatureDim, 0.0);

    auto const hops = static_cast<double>(_relations.size());
    auto const n_rel = _relations.size();
    auto const n_seen = _state.seen.size();
    double const budget = static_cast<double>(_state.steps_taken) / static_cast<double>(_task->max_steps);

    // Best and runner-up child support per (entity, relation) query.
    std::vector<int> best_child(n_seen * n_rel, 0);
    std::vector<int> second_child(n_seen * n_rel, 0);
    for (auto const& b: _state.seen)
        if (b.parent && *b.parent < n_seen && b.parent_relation < n_rel)
        {
            auto const slot = *b.parent * n_rel + b.parent_relation;
            if (b.support > best_child[slot])
            {
                second_child[slot] = best_child[slot];
                best_child[slot] = b.support;
            }
            else
            {
                second_child[slot] = std::max(second_child[slot], b.support);
            }
        }

    auto support_of = [](const EntityBelief& b) { return std::min(b.support, 3) / 3.0; };
    auto depth_of = [&](const EntityBelief& b) { return b.depth >= 0 ? std::min(b.depth / hops, 1.0) : 0.0; };
    // Support margin over the strongest sibling, capped at 3.
    auto lead = [&](const EntityBelief& b) {
        if (!b.parent || *b.parent >= n_seen || b.parent_relation >= n_rel)
            return 1.0;
        auto const slot = *b.parent * n_rel + b.parent_relation;
        int const rival = b.support == best_child[slot] ? second_child[slot] : best_child[slot];
        return std::clamp(b.support - rival, 0, 3) / 3.0;
    };

    auto const order = entity_order();
    std::size_t row = 0;
    for (auto e: order)
    {
        auto const& b = _state.seen[e];
        auto f = ctx.row(row++);
        f[1] = support_of(b);
        f[2] = depth_of(b);
        f[3] = 1.0;
        f[4] = (b.depth >= 0 && static_cast<std::size_t>(b.depth) == n_rel) ? 1.0 : 0.0;
        f[7] = budget;
        f[8] = lead(b);
    }
    for (auto e: order)
    {
        auto const& b = _state.seen[e];
        for (std::size_t r = 0; r < n_rel; ++r)
        {
            auto f = ctx.row(row++);
            f[0] = (b.depth >= 0 && static_cast<std::size_t>(b.depth) == r) ? 1.0 : 0.0;
            f[1] = support_of(b);
            f[2] = depth_of(b);
            f[8] = lead(b);
            bool const repeated = std::find(_state.issued.begin(), _state.issued.end(), std::pair{e, r})
                                  != _state.issued.end();
            if (repeated)
            {
                auto const slot = e * n_rel + r;
                bool const clear = best_child[slot] - second_child[slot] >= 2;
                f[5] = clear ? 0.0 : 1.0;
                f[6] = clear ? 1.0 : 0.0;
            }
        }
    }
    return ctx;
}

int SearchEnv::oracle_step_value(std::string_view action) const
{
    if (auto answer = parse_answer(action))
        return normalize_answer(*answer) == normalize_answer(_task->gold_answer) ? 10 : 0;
    if (auto query = parse_search(action))
        return static_cast<int>(std::lround(10.0 * query_quality(*_task, frontier_for(query->entity),
                                                                   query->entity, query->relation)));
    return 0;
}

bool SearchEnv::verify_success() const
{
    if (!_state.submitted_answer)
        return false;
    // Walk the knowledge base from the anchor instead of trusting chain.back().
    std::string entity = _task->anchor();
    for (auto const& hop: _task->chain)
    {
        auto it = std::find_if(_task->knowledge_base.begin(), _task->knowledge_base.end(), [&](const Fact& f) {
            return f.subject == entity && f.relation == hop.relation;
        });
        if (it == _task->knowledge_base.end())
            return false;
        entity = it->object;
    }
    return normalize_answer(entity) == normalize_answer(*_state.submitted_answer);
}

} // namespace proceed
