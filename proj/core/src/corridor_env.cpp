// SPDX-License-Identifier: Apache-2.0
#include "proceed/corridor_env.hpp"

#include "proceed/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <deque>
#include <set>

namespace proceed
{

namespace
{

constexpr std::string_view kLureAction = "open the shiny box";

std::string go_to(int room)
{
    return fmt::format("go to room {}", room);
}

/// Compact planning state; the object location is -1 while carried.
struct Compact
{
    int room;
    bool has_key;
    bool door_open;
    int object;
};

bool door_edge(const CorridorTask& task, int a, int b)
{
    return (a == task.door.first && b == task.door.second) || (a == task.door.second && b == task.door.first);
}

bool is_goal(const CorridorTask& task, const Compact& s)
{
    return s.object == task.goal_room;
}

/// Admissible actions and their successors, in candidate order.
std::vector<std::pair<std::string, Compact>> moves(const CorridorTask& task, const Compact& s)
{
    std::vector<std::pair<std::string, Compact>> out;
    auto neighbors = task.room_graph[static_cast<std::size_t>(s.room)];
    std::sort(neighbors.begin(), neighbors.end());
    for (int n: neighbors)
    {
        if (door_edge(task, s.room, n) && !s.door_open)
            continue;
        Compact t = s;
        t.room = n;
        out.emplace_back(go_to(n), t);
    }
    if (s.room == task.key_room() && !s.has_key)
    {
        Compact t = s;
        t.has_key = true;
        out.emplace_back("take key", t);
    }
    if (s.has_key && !s.door_open && s.room == task.door.first)
    {
        Compact t = s;
        t.door_open = true;
        out.emplace_back("open door", t);
    }
    if (s.object == s.room)
    {
        Compact t = s;
        t.object = -1;
        out.emplace_back(fmt::format("take {}", task.object_name), t);
    }
    if (s.object == -1)
    {
        Compact t = s;
        t.object = s.room;
        out.emplace_back(fmt::format("place {}", task.object_name), t);
    }
    if (std::find(task.trap_rooms.begin(), task.trap_rooms.end(), s.room) != task.trap_rooms.end())
        out.emplace_back(std::string(kLureAction), s);
    return out;
}

Compact compact(const CorridorState& s)
{
    return {s.room, s.has_key, s.door_open, s.object_location};
}

} // namespace

std::vector<std::string> corridor_subgoals(const std::string& object_name)
{
    return {"find key", "take key", "open door", fmt::format("take {}", object_name),
            fmt::format("place {}", object_name)};
}

void validate(const CorridorTask& task)
{
    auto fail = [&](const std::string& what) { throw Error(Errc::InvalidTask, fmt::format("{}: {}", task.id, what)); };
    if (task.id.empty())
        throw Error(Errc::InvalidTask, "corridor task without id");
    if (task.room_count < 2 || task.room_graph.size() != static_cast<std::size_t>(task.room_count))
        fail("room graph size does not match room_count");
    auto valid_room = [&](int r) { return r >= 0 && r < task.room_count; };
    for (int r = 0; r < task.room_count; ++r)
        for (int n: task.room_graph[static_cast<std::size_t>(r)])
        {
            if (!valid_room(n) || n == r)
                fail(fmt::format("room {} has invalid neighbor {}", r, n));
            auto const& back = task.room_graph[static_cast<std::size_t>(n)];
            if (std::find(back.begin(), back.end(), r) == back.end())
                fail(fmt::format("edge {}-{} is not symmetric", r, n));
        }
    if (!valid_room(task.start_room) || !valid_room(task.goal_room))
        fail("start or goal room out of range");
    if (!valid_room(task.door.first) || !valid_room(task.door.second))
        fail("door rooms out of range");
    auto const& dn = task.room_graph[static_cast<std::size_t>(task.door.first)];
    if (std::find(dn.begin(), dn.end(), task.door.second) == dn.end())
        fail("door rooms are not adjacent");
    if (!task.initial_placement.contains("key") || !task.initial_placement.contains(task.object_name))
        fail("initial placement must locate the key and the object");
    if (!valid_room(task.key_room()) || !valid_room(task.object_room()))
        fail("placement room out of range");
    if (task.object_room() == task.goal_room)
        fail("object already in the goal room");
    for (int t: task.trap_rooms)
        if (!valid_room(t))
            fail(fmt::format("trap room {} out of range", t));
    if (task.max_steps < 1)
        fail("max_steps must be positive");
    CorridorPlanner const planner(task);
    int const plan = planner.remaining(task.start_room, false, false, task.object_room());
    if (plan >= CorridorPlanner::kUnreachable)
        fail("no plan reaches the goal");
    if (plan > task.max_steps)
        fail(fmt::format("optimal plan length {} exceeds max_steps {}", plan, task.max_steps));
}

CorridorPlanner::CorridorPlanner(const CorridorTask& task): _rooms(task.room_count)
{
    std::size_t const n = static_cast<std::size_t>(_rooms) * 4 * static_cast<std::size_t>(_rooms + 1);
    _remaining.assign(n, kUnreachable);

    std::vector<std::vector<std::size_t>> reverse(n);
    std::deque<std::size_t> frontier;
    for (int room = 0; room < _rooms; ++room)
        for (int key = 0; key < 2; ++key)
            for (int door = 0; door < 2; ++door)
                for (int obj = -1; obj < _rooms; ++obj)
                {
                    Compact const s{room, key == 1, door == 1, obj};
                    auto const from = index(room, s.has_key, s.door_open, obj);
                    if (is_goal(task, s))
                    {
                        _remaining[from] = 0;
                        frontier.push_back(from);
                        continue;
                    }
                    for (auto const& [_, t]: moves(task, s))
                        reverse[index(t.room, t.has_key, t.door_open, t.object)].push_back(from);
                }
    while (!frontier.empty())
    {
        auto const cur = frontier.front();
        frontier.pop_front();
        for (auto prev: reverse[cur])
            if (_remaining[prev] == kUnreachable)
            {
                _remaining[prev] = _remaining[cur] + 1;
                frontier.push_back(prev);
            }
    }

    _room_distance.assign(static_cast<std::size_t>(_rooms * _rooms), kUnreachable);
    for (int src = 0; src < _rooms; ++src)
    {
        auto* dist = &_room_distance[static_cast<std::size_t>(src * _rooms)];
        dist[src] = 0;
        std::deque<int> q{src};
        while (!q.empty())
        {
            int const r = q.front();
            q.pop_front();
            for (int nb: task.room_graph[static_cast<std::size_t>(r)])
                if (dist[nb] == kUnreachable)
                {
                    dist[nb] = dist[r] + 1;
                    q.push_back(nb);
                }
        }
    }
}

std::size_t CorridorPlanner::index(int room, bool has_key, bool door_open, int object_location) const
{
    return ((static_cast<std::size_t>(room) * 2 + (has_key ? 1 : 0)) * 2 + (door_open ? 1 : 0))
               * static_cast<std::size_t>(_rooms + 1)
           + static_cast<std::size_t>(object_location + 1);
}

int CorridorPlanner::remaining(int room, bool has_key, bool door_open, int object_location) const
{
    return _remaining[index(room, has_key, door_open, object_location)];
}

int CorridorPlanner::remaining(const CorridorState& state) const
{
    return remaining(state.room, state.has_key, state.door_open, state.object_location);
}

int CorridorPlanner::room_distance(int from, int to) const
{
    return _room_distance[static_cast<std::size_t>(from * _rooms + to)];
}

CorridorEnv::CorridorEnv(std::shared_ptr<const CorridorTask> task): _task(std::move(task))
{
    if (!_task)
        throw Error(Errc::InvalidTask, "null corridor task");
    validate(*_task);
    _planner = std::make_shared<const CorridorPlanner>(*_task);
}

bool CorridorEnv::is_trap(int room) const
{
    return std::find(_task->trap_rooms.begin(), _task->trap_rooms.end(), room) != _task->trap_rooms.end();
}

std::string CorridorEnv::task_description() const
{
    return fmt::format("Put the {} in room {}.", _task->object_name, _task->goal_room);
}

std::string CorridorEnv::environment_config() const
{
    std::string edges;
    for (int r = 0; r < _task->room_count; ++r)
        for (int n: _task->room_graph[static_cast<std::size_t>(r)])
            if (r < n)
                edges += fmt::format("{}{}-{}", edges.empty() ? "" : ", ", r, n);
    return fmt::format("Rooms 0-{} connected as: {}. The key is in room {}. The {} is in room {}. A locked door "
                       "separates room {} and room {}; open it from room {}. You start in room {}.",
                       _task->room_count - 1, edges, _task->key_room(), _task->object_name, _task->object_room(),
                       _task->door.first, _task->door.second, _task->door.first, _task->start_room);
}

std::vector<std::string> CorridorEnv::admissible(const CorridorState& state) const
{
    std::vector<std::string> out;
    for (auto& [action, _]: moves(*_task, compact(state)))
        out.push_back(std::move(action));
    return out;
}

std::string CorridorEnv::render(const CorridorState& state, std::string_view event) const
{
    std::string exits;
    auto neighbors = _task->room_graph[static_cast<std::size_t>(state.room)];
    std::sort(neighbors.begin(), neighbors.end());
    for (int n: neighbors)
    {
        std::string note;
        if (door_edge(*_task, state.room, n))
            note = state.door_open ? " (open door)" : " (locked door)";
        else if (is_trap(n))
            note = " (something glitters there)";
        exits += fmt::format("{}room {}{}", exits.empty() ? "" : ", ", n, note);
    }
    std::vector<std::string> items;
    if (state.room == _task->key_room() && !state.has_key)
        items.emplace_back("a key");
    if (state.object_location == state.room)
        items.push_back(fmt::format("the {}", _task->object_name));
    if (is_trap(state.room))
        items.emplace_back("a shiny box");
    std::vector<std::string> carried;
    if (state.has_key)
        carried.emplace_back("key");
    if (state.object_location == -1)
        carried.push_back(_task->object_name);

    return fmt::format("{}{}You are in room {}. Exits: {}. You see: {}. You carry: {}.\nAdmissible actions: {}.", event,
                       event.empty() ? "" : "\n", state.room, exits,
                       items.empty() ? std::string("nothing") : fmt::format("{}", fmt::join(items, ", ")),
                       carried.empty() ? std::string("nothing") : fmt::format("{}", fmt::join(carried, ", ")),
                       fmt::join(admissible(state), ", "));
}

std::string CorridorEnv::reset(std::uint64_t /*seed*/)
{
    _state = CorridorState{};
    _state.room = _task->start_room;
    _state.object_location = _task->object_room();
    _state.visited.assign(static_cast<std::size_t>(_task->room_count), false);
    _state.visited[static_cast<std::size_t>(_state.room)] = true;
    _state.last_observation = render(_state, fmt::format("Task: {}", task_description()));
    return _state.last_observation;
}

std::optional<CorridorState> CorridorEnv::transition(const CorridorState& state, std::string_view action) const
{
    for (auto const& [name, next]: moves(*_task, compact(state)))
    {
        if (name != action)
            continue;
        CorridorState out = state;
        if (next.room != state.room)
        {
            out.previous_room = state.room;
            out.visited[static_cast<std::size_t>(next.room)] = true;
        }
        out.room = next.room;
        out.has_key = next.has_key;
        out.door_open = next.door_open;
        out.object_location = next.object;
        out.steps_taken = state.steps_taken + 1;
        out.success = is_goal(*_task, next);
        out.done = out.success || out.steps_taken >= _task->max_steps;
        return out;
    }
    return std::nullopt;
}

StepOutcome CorridorEnv::step(std::string_view action)
{
    if (_state.done)
        throw Error(Errc::StepAfterDone, fmt::format("task '{}' already finished", _task->id));
    auto next = transition(_state, action);
    if (!next)
        throw Error(Errc::InadmissibleAction, fmt::format("'{}' is not admissible in room {}", action, _state.room));

    std::string event;
    if (next->success)
        event = fmt::format("You place the {} in room {}. Task complete.", _task->object_name, next->room);
    else if (action == kLureAction)
        event = "The box is empty.";
    else if (next->steps_taken >= _task->max_steps)
        event = "Step budget exhausted.";
    _state = std::move(*next);
    _state.last_observation = render(_state, event);
    return {_state.last_observation, _state.done, _state.success};
}

Snapshot CorridorEnv::snapshot() const
{
    return Snapshot{_state};
}

void CorridorEnv::restore(const Snapshot& snap)
{
    _state = std::any_cast<const CorridorState&>(snap.state);
}

std::unique_ptr<Environment> CorridorEnv::clone() const
{
    return std::make_unique<CorridorEnv>(*this);
}

std::vector<std::string> CorridorEnv::candidate_actions() const
{
    return admissible(_state);
}

int CorridorEnv::subgoal_target(const CorridorState& state) const
{
    if (!state.has_key)
        return _task->key_room();
    if (!state.door_open)
        return _task->door.first;
    if (state.object_location >= 0)
        return state.object_location;
    return _task->goal_room;
}

// Features, all in [0, 1]:
//   0 move that shortens the distance to the current subgoal's room
//   1 move that lengthens it
//   2 move into a room where something glitters
//   3 interaction that completes the current subgoal
//   4 interaction that does not (misplacing the object, opening the box)
//   5 move back to the room just left
//   6 move into a room not yet visited
//   7 any non-move interaction
DecisionContext CorridorEnv::decision_context() const
{
    DecisionContext ctx;
    auto const options = moves(*_task, compact(_state));
    ctx.dim = kFeatureDim;
    ctx.features.assign(options.size() * kFeatureDim, 0.0);
    int const target = subgoal_target(_state);
    int const here = _planner->room_distance(_state.room, target);

    for (std::size_t i = 0; i < options.size(); ++i)
    {
        auto const& [name, next] = options[i];
        ctx.candidates.push_back(name);
        auto f = ctx.row(i);
        if (next.room != _state.room)
        {
            int const there = _planner->room_distance(next.room, target);
            f[0] = there < here ? 1.0 : 0.0;
            f[1] = there > here ? 1.0 : 0.0;
            f[2] = is_trap(next.room) ? 1.0 : 0.0;
            f[5] = next.room == _state.previous_room ? 1.0 : 0.0;
            f[6] = _state.visited[static_cast<std::size_t>(next.room)] ? 0.0 : 1.0;
            continue;
        }
        f[7] = 1.0;
        bool const advances = (next.has_key && !_state.has_key) || (next.door_open && !_state.door_open)
                              || (next.object == -1 && _state.object_location >= 0)
                              || (next.object == _task->goal_room && _state.object_location == -1);
        f[3] = advances ? 1.0 : 0.0;
        f[4] = advances ? 0.0 : 1.0;
    }
    return ctx;
}

int CorridorEnv::oracle_step_value(std::string_view action) const
{
    auto next = transition(_state, action);
    if (!next)
        return 0;
    int const before = _planner->remaining(_state);
    int const after = _planner->remaining(*next);
    int const value = 5 + 5 * (before - after);
    return std::clamp(value, 0, 10);
}

bool CorridorEnv::verify_success() const
{
    return _state.object_location == _task->goal_room;
}

} // namespace proceed
