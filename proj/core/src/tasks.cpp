// SPDX-License-Identifier: Apache-2.0
#include "proceed/tasks.hpp"

#include "proceed/error.hpp"
#include "proceed/rng.hpp"

#include <fmt/format.h>

#include "json.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <sstream>

namespace proceed
{

using json = nlohmann::ordered_json;

std::string_view to_string(EnvKind kind) noexcept
{
    return kind == EnvKind::Search ? "search" : "corridor";
}

EnvKind env_kind_from_string(std::string_view name)
{
    if (name == "search")
        return EnvKind::Search;
    if (name == "corridor")
        return EnvKind::Corridor;
    throw Error(Errc::ConfigError, fmt::format("unknown environment kind '{}'", name));
}

EnvKind kind_of(const Task& task) noexcept
{
    return std::holds_alternative<SearchTask>(task) ? EnvKind::Search : EnvKind::Corridor;
}

const std::string& id_of(const Task& task) noexcept
{
    return std::visit([](const auto& t) -> const std::string& { return t.id; }, task);
}

namespace
{

constexpr std::array kOnsets{"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "kl", "tr"};
constexpr std::array kVowels{"a", "e", "i", "o", "u", "ae", "ia", "ou"};
constexpr std::array kCodas{"", "n", "r", "s", "l", "th", "nd", "x"};

constexpr std::array kRelations{"born_in",   "located_in",  "founded_by", "directed_by",
                                "member_of", "named_after", "spouse_of",  "headquartered_in"};

constexpr std::array kObjects{"vase", "mug", "book", "lamp", "apple", "pillow"};

std::string make_name(CounterRng& rng)
{
    int const syllables = 2 + static_cast<int>(rng.below(2));
    std::string name;
    for (int i = 0; i < syllables; ++i)
    {
        name += kOnsets[rng.below(kOnsets.size())];
        name += kVowels[rng.below(kVowels.size())];
    }
    name += kCodas[rng.below(kCodas.size())];
    name[0] = static_cast<char>(name[0] - 'a' + 'A');
    return name;
}

std::vector<std::string> distinct_names(CounterRng& rng, std::size_t count)
{
    std::vector<std::string> out;
    std::set<std::string> used;
    while (out.size() < count)
    {
        auto name = make_name(rng);
        if (used.insert(normalize_answer(name)).second)
            out.push_back(std::move(name));
    }
    return out;
}

constexpr std::size_t kDistractors = 12;

SearchTask generate_search(const TaskGenOptions& opt, int index, CounterRng rng)
{
    if (opt.difficulty < 2 || opt.difficulty > 4)
        throw Error(Errc::InvalidTask, fmt::format("search hops must be in [2,4], got {}", opt.difficulty));
    auto const hops = static_cast<std::size_t>(opt.difficulty);

    auto names = distinct_names(rng, hops + 1 + kDistractors + 2);
    std::vector<std::string> relations(kRelations.begin(), kRelations.end());
    for (std::size_t i = relations.size() - 1; i > 0; --i)
        std::swap(relations[i], relations[rng.below(i + 1)]);

    SearchTask task;
    task.id = fmt::format("{}-{}", opt.id_prefix, index);
    task.noise_level = opt.noise_level;
    task.max_steps = opt.max_steps > 0 ? opt.max_steps : default_max_steps(EnvKind::Search);
    for (std::size_t h = 0; h < hops; ++h)
        task.chain.push_back(Fact{names[h], relations[h], names[h + 1]});
    task.gold_answer = names[hops];
    task.distractor_entities.assign(names.begin() + static_cast<std::ptrdiff_t>(hops + 1),
                                    names.begin() + static_cast<std::ptrdiff_t>(hops + 1 + kDistractors));
    task.knowledge_base = task.chain;
    // Background facts hang off distractors only, so the chain stays the unique path.
    auto const& extra_a = names[hops + 1 + kDistractors];
    auto const& extra_b = names[hops + 2 + kDistractors];
    for (std::size_t i = 0; i < task.distractor_entities.size(); ++i)
        task.knowledge_base.push_back(
            Fact{task.distractor_entities[i], relations[rng.below(relations.size())], i % 2 == 0 ? extra_a : extra_b});

    std::string path;
    for (std::size_t h = 0; h < hops; ++h)
        path += fmt::format("{}{}", h == 0 ? "" : " -> ", relations[h]);
    task.question = fmt::format("Starting from {}, follow the relations {}. Which entity do you reach?", names[0], path);
    validate(task);
    return task;
}

CorridorTask generate_corridor(const TaskGenOptions& opt, int index, CounterRng rng)
{
    // Plan = moves + 4 interactions (take key, open door, take object, place).
    int const moves_total = opt.difficulty - 4;
    if (moves_total < 2)
        throw Error(Errc::InvalidTask, fmt::format("corridor plan length must be >= 6, got {}", opt.difficulty));

    // Object room o in [1, M-1]; the goal lies M-o rooms behind or ahead of it.
    int const object_room = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(moves_total - 1)));
    int const back = moves_total - object_room;
    std::vector<int> goals;
    if (object_room - back >= 0)
        goals.push_back(object_room - back);
    goals.push_back(object_room + back);
    int const goal_room = goals[rng.below(goals.size())];

    int const door_first = static_cast<int>(rng.below(static_cast<std::uint64_t>(object_room)));
    int const key_room = static_cast<int>(rng.below(static_cast<std::uint64_t>(door_first + 1)));
    int const main_rooms = std::max(object_room, goal_room) + 1 + 1 + static_cast<int>(rng.below(2));

    int const traps = 3 + static_cast<int>(rng.below(2));
    CorridorTask task;
    task.id = fmt::format("{}-{}", opt.id_prefix, index);
    task.room_count = main_rooms + traps;
    task.room_graph.assign(static_cast<std::size_t>(task.room_count), {});
    auto connect = [&](int a, int b) {
        task.room_graph[static_cast<std::size_t>(a)].push_back(b);
        task.room_graph[static_cast<std::size_t>(b)].push_back(a);
    };
    for (int r = 0; r + 1 < main_rooms; ++r)
        connect(r, r + 1);
    for (int t = 0; t < traps; ++t)
    {
        int const trap = main_rooms + t;
        connect(static_cast<int>(rng.below(static_cast<std::uint64_t>(main_rooms))), trap);
        task.trap_rooms.push_back(trap);
    }
    task.start_room = 0;
    task.door = {door_first, door_first + 1};
    task.goal_room = goal_room;
    task.object_name = kObjects[rng.below(kObjects.size())];
    task.initial_placement = {{"key", key_room}, {task.object_name, object_room}};
    task.subgoal_sequence = corridor_subgoals(task.object_name);
    task.max_steps = opt.max_steps > 0 ? opt.max_steps : default_max_steps(EnvKind::Corridor);
    validate(task);
    return task;
}

json fact_json(const Fact& f)
{
    return json::array({f.subject, f.relation, f.object});
}

Fact fact_from(const json& j)
{
    if (!j.is_array() || j.size() != 3)
        throw Error(Errc::InvalidTask, "fact must be a [subject, relation, object] triple");
    return Fact{j[0].get<std::string>(), j[1].get<std::string>(), j[2].get<std::string>()};
}

json task_json(const SearchTask& t)
{
    json kb = json::array();
    for (auto const& f: t.knowledge_base)
        kb.push_back(fact_json(f));
    json chain = json::array();
    for (auto const& f: t.chain)
        chain.push_back(fact_json(f));
    return json{
        {"kind", "search"},
        {"id", t.id},
        {"knowledge_base", std::move(kb)},
        {"chain", std::move(chain)},
        {"question", t.question},
        {"gold_answer", t.gold_answer},
        {"distractor_entities", t.distractor_entities},
        {"noise_level", t.noise_level},
        {"max_steps", t.max_steps},
    };
}

json task_json(const CorridorTask& t)
{
    json placement = json::object();
    for (auto const& [k, v]: t.initial_placement)
        placement[k] = v;
    return json{
        {"kind", "corridor"},
        {"id", t.id},
        {"room_count", t.room_count},
        {"room_graph", t.room_graph},
        {"start_room", t.start_room},
        {"door", json::array({t.door.first, t.door.second})},
        {"goal_room", t.goal_room},
        {"object_name", t.object_name},
        {"trap_rooms", t.trap_rooms},
        {"initial_placement", std::move(placement)},
        {"subgoal_sequence", t.subgoal_sequence},
        {"max_steps", t.max_steps},
    };
}

Task task_from(const json& j)
{
    auto const kind = env_kind_from_string(j.at("kind").get<std::string>());
    if (kind == EnvKind::Search)
    {
        SearchTask t;
        t.id = j.at("id").get<std::string>();
        for (auto const& f: j.at("knowledge_base"))
            t.knowledge_base.push_back(fact_from(f));
        for (auto const& f: j.at("chain"))
            t.chain.push_back(fact_from(f));
        t.question = j.at("question").get<std::string>();
        t.gold_answer = j.at("gold_answer").get<std::string>();
        t.distractor_entities = j.at("distractor_entities").get<std::vector<std::string>>();
        t.noise_level = j.at("noise_level").get<double>();
        t.max_steps = j.value("max_steps", default_max_steps(EnvKind::Search));
        validate(t);
        return t;
    }
    CorridorTask t;
    t.id = j.at("id").get<std::string>();
    t.room_count = j.at("room_count").get<int>();
    t.room_graph = j.at("room_graph").get<std::vector<std::vector<int>>>();
    t.start_room = j.value("start_room", 0);
    auto const door = j.at("door").get<std::vector<int>>();
    if (door.size() != 2)
        throw Error(Errc::InvalidTask, fmt::format("{}: door must list two rooms", t.id));
    t.door = {door[0], door[1]};
    t.goal_room = j.at("goal_room").get<int>();
    t.object_name = j.at("object_name").get<std::string>();
    t.trap_rooms = j.value("trap_rooms", std::vector<int>{});
    for (auto const& [k, v]: j.at("initial_placement").items())
        t.initial_placement[k] = v.get<int>();
    t.subgoal_sequence = j.value("subgoal_sequence", corridor_subgoals(t.object_name));
    t.max_steps = j.value("max_steps", default_max_steps(EnvKind::Corridor));
    validate(t);
    return t;
}

} // namespace

std::vector<Task> generate_tasks(const TaskGenOptions& options)
{
    if (options.count <= 0)
        throw Error(Errc::InvalidTask, "task count must be positive");
    TaskGenOptions opt = options;
    if (opt.id_prefix.empty())
        opt.id_prefix = fmt::format("{}-{}", to_string(opt.kind), opt.seed);

    std::vector<Task> out;
    out.reserve(static_cast<std::size_t>(opt.count));
    CounterRng const root(combine_keys(opt.seed, hash_string(to_string(opt.kind))));
    for (int i = 0; i < opt.count; ++i)
    {
        auto rng = root.split(fmt::format("task-{}-{}", opt.difficulty, i));
        if (opt.kind == EnvKind::Search)
            out.emplace_back(generate_search(opt, i, rng));
        else
            out.emplace_back(generate_corridor(opt, i, rng));
    }
    return out;
}

std::string tasks_to_json(const std::vector<Task>& tasks)
{
    json arr = json::array();
    for (auto const& t: tasks)
        arr.push_back(std::visit([](const auto& x) { return task_json(x); }, t));
    return arr.dump(2);
}

std::vector<Task> tasks_from_json(std::string_view text)
{
    json arr;
    try
    {
        arr = json::parse(text);
    }
    catch (const json::exception& e)
    {
        throw Error(Errc::InvalidTask, fmt::format("task file is not valid JSON: {}", e.what()));
    }
    if (!arr.is_array())
        throw Error(Errc::InvalidTask, "task file must hold a JSON array");
    std::vector<Task> out;
    for (std::size_t i = 0; i < arr.size(); ++i)
    {
        try
        {
            out.push_back(task_from(arr[i]));
        }
        catch (const json::exception& e)
        {
            throw Error(Errc::InvalidTask, fmt::format("task {}: {}", i, e.what()));
        }
    }
    return out;
}

void save_tasks(const std::filesystem::path& path, const std::vector<Task>& tasks)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(Errc::IoError, fmt::format("cannot write '{}'", path.string()));
    out << tasks_to_json(tasks) << '\n';
}

std::vector<Task> load_tasks(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(Errc::IoError, fmt::format("cannot read '{}'", path.string()));
    std::stringstream buf;
    buf << in.rdbuf();
    return tasks_from_json(buf.str());
}

std::unique_ptr<Environment> make_environment(const Task& task)
{
    if (auto const* s = std::get_if<SearchTask>(&task))
        return std::make_unique<SearchEnv>(std::make_shared<const SearchTask>(*s));
    return std::make_unique<CorridorEnv>(std::make_shared<const CorridorTask>(std::get<CorridorTask>(task)));
}

void apply_overrides(std::vector<Task>& tasks, std::optional<double> noise_level, std::optional<int> max_steps)
{
    for (auto& task: tasks)
    {
        std::visit(
            [&](auto& t) {
                if (max_steps && *max_steps > 0)
                    t.max_steps = *max_steps;
            },
            task);
        if (auto* s = std::get_if<SearchTask>(&task); s && noise_level)
        {
            if (*noise_level < 0.0 || *noise_level > 1.0)
                throw Error(Errc::ConfigError, fmt::format("noise level {} outside [0,1]", *noise_level));
            s->noise_level = *noise_level;
        }
    }
}

} // namespace proceed
