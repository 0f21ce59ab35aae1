// SPDX-License-Identifier: Apache-2.0
#include "proceed/corridor_env.hpp"
#include "proceed/error.hpp"
#include "proceed/search_env.hpp"
#include "proceed/tasks.hpp"

#include "../support/fixtures.hpp"

#include <doctest.h>

using namespace proceed;

namespace
{

SearchEnv search_env(int hops, double noise, std::uint64_t seed = 11)
{
    return SearchEnv(std::make_shared<const SearchTask>(testing::search_task(hops, noise, seed)));
}

std::string exact_query(const SearchEnv& env, std::size_t hop = 0)
{
    auto const& fact = env.task().chain[hop];
    return format_search(fact.subject, fact.relation);
}

std::vector<std::string> searches(const Environment& env)
{
    std::vector<std::string> out;
    for (auto const& a: env.candidate_actions())
        if (parse_search(a))
            out.push_back(a);
    return out;
}

} // namespace

TEST_CASE("reset is deterministic in task and seed")
{
    auto a = search_env(3, 0.5);
    auto b = search_env(3, 0.5);
    CHECK(a.reset(9) == b.reset(9));
    auto const q = exact_query(a);
    CHECK(a.step(q).observation == b.step(q).observation);

    auto const task = testing::search_task(2, 0.0);
    auto env = search_env(2, 0.0);
    CHECK(env.reset(1).find(task.question) != std::string::npos);

    auto corridor = testing::six_room_env();
    auto const obs = corridor->reset(1);
    for (auto const& a: corridor->candidate_actions())
        CHECK(obs.find(a) != std::string::npos);
}

TEST_CASE("search answer with the gold entity succeeds")
{
    auto env = search_env(2, 0.0);
    env.reset(3);
    auto const out = env.step(format_answer(env.task().gold_answer));
    CHECK(out.done);
    CHECK(out.success);
    CHECK(env.verify_success());
    CHECK_THROWS_AS(env.step("Answer(x)"), Error);
}

TEST_CASE("search follows the chain under zero noise")
{
    auto env = search_env(3, 0.0);
    env.reset(5);
    for (std::size_t hop = 0; hop < env.task().hops(); ++hop)
    {
        auto const q = exact_query(env, hop);
        CHECK(env.oracle_step_value(q) == 10);
        auto const out = env.step(q);
        CHECK_FALSE(out.done);
        CHECK(out.observation.find(env.task().chain[hop].object) != std::string::npos);
    }
    auto const answer = format_answer(env.task().gold_answer);
    auto const cands = env.candidate_actions();
    CHECK(std::find(cands.begin(), cands.end(), answer) != cands.end());
    CHECK(env.oracle_step_value(answer) == 10);
    CHECK(env.step(answer).success);
}

TEST_CASE("search oracle scores are 0, 5 or 10")
{
    auto env = search_env(4, 0.5);
    env.reset(2);
    CounterRng rng(1);
    while (!env.done())
    {
        auto const cands = env.candidate_actions();
        for (auto const& a: cands)
        {
            int const v = env.oracle_step_value(a);
            CHECK((v == 0 || v == 5 || v == 10));
        }
        env.step(cands[rng.below(cands.size())]);
        if (env.steps_taken() >= env.max_steps())
            break;
    }
}

TEST_CASE("search noise model")
{
    auto const task = testing::search_task(2, 0.5);
    SearchQuery q{task.chain[0].subject, task.chain[0].relation};
    CounterRng rng(77);

    for (int i = 0; i < 100; ++i)
        for (auto const& s: search_noise_model(task, 0, q, 1.0, 0.0, rng))
        {
            CHECK(s.is_true_fact);
            CHECK(s.fact == task.chain[0]);
        }

    for (int i = 0; i < 100; ++i)
        for (auto const& s: search_noise_model(task, 0, q, 0.0, 0.0, rng))
        {
            CHECK_FALSE(s.is_true_fact);
            CHECK(std::find(task.distractor_entities.begin(), task.distractor_entities.end(), s.fact.object) !=
                  task.distractor_entities.end());
        }

    std::array<int, 3> hits{};
    int const draws = 10000;
    auto const before = rng.position();
    for (int i = 0; i < draws; ++i)
    {
        auto const slots = search_noise_model(task, 0, q, 1.0, 0.5, rng);
        for (std::size_t k = 0; k < 3; ++k)
            hits[k] += slots[k].is_true_fact ? 1 : 0;
    }
    CHECK(rng.position() - before == static_cast<std::uint64_t>(draws) * 6);
    for (int h: hits)
        CHECK(std::abs(static_cast<double>(h) / draws - 0.5) <= 0.02);
}

TEST_CASE("snapshot and restore are exact")
{
    auto env = search_env(3, 0.5);
    env.reset(4);
    auto const cands = searches(env);
    REQUIRE(cands.size() >= 2);
    auto const a1 = cands[0];
    auto const a2 = cands[1];

    auto const snap = env.snapshot();
    auto direct = env.clone();
    auto const expected = direct->step(a2).observation;

    env.step(a1);
    env.restore(snap);
    CHECK(env.step(a2).observation == expected);

    env.restore(snap);
    auto const inner = env.snapshot();
    env.step(a1);
    auto const deep = env.snapshot();
    env.step(searches(env).front());
    env.restore(deep);
    env.restore(inner);
    CHECK(env.step(a2).observation == expected);
    CHECK(env.steps_taken() == 1);

    auto corridor = testing::six_room_env();
    corridor->reset(0);
    auto const cs = corridor->snapshot();
    auto const state = corridor->state();
    corridor->step("take key");
    corridor->restore(cs);
    CHECK(corridor->state() == state);
}

TEST_CASE("corridor oracle on the six-room instance")
{
    auto env = testing::six_room_env();
    env->reset(0);
    CHECK(env->planner().remaining(env->state()) == 8);

    env->step("take key");
    env->step("go to room 1");
    CHECK(env->oracle_step_value("go to room 4") == 0);
    CHECK(env->oracle_step_value("go to room 2") == 10);

    auto const out = env->step("go to room 4");
    CHECK_FALSE(out.done);
    CHECK(env->state().room == 4);
    CHECK(env->planner().remaining(env->state()) == 7);
    CHECK_THROWS_AS(env->step("go to room 3"), Error);
}

TEST_CASE("corridor optimal plan succeeds")
{
    auto env = testing::six_room_env();
    env->reset(0);
    StepOutcome out;
    for (auto const& a: testing::six_room_plan())
    {
        CHECK(env->oracle_step_value(a) == 10);
        out = env->step(a);
    }
    CHECK(out.done);
    CHECK(out.success);
    CHECK(env->verify_success());
}

TEST_CASE("task generation")
{
    TaskGenOptions o;
    o.kind = EnvKind::Search;
    o.count = 1;
    o.difficulty = 2;
    o.seed = 3;
    auto const a = generate_tasks(o);
    CHECK(std::get<SearchTask>(a.front()).chain.size() == 2);
    CHECK(tasks_to_json(a) == tasks_to_json(generate_tasks(o)));
    CHECK(tasks_from_json(tasks_to_json(a)) == a);

    o.kind = EnvKind::Corridor;
    o.count = 100;
    o.difficulty = 12;
    auto const tasks = generate_tasks(o);
    REQUIRE(tasks.size() == 100);
    for (auto const& t: tasks)
    {
        auto const& ct = std::get<CorridorTask>(t);
        CHECK_NOTHROW(validate(ct));
        CorridorEnv env(std::make_shared<const CorridorTask>(ct));
        env.reset(0);
        CHECK(env.planner().remaining(env.state()) == 12);
    }
}

TEST_CASE("invalid tasks are rejected")
{
    auto t = testing::six_room_task();
    t.goal_room = 9;
    CHECK_THROWS_AS(validate(t), Error);

    auto s = testing::search_task(2, 0.5);
    s.chain.clear();
    CHECK_THROWS_AS(validate(s), Error);
}
