// SPDX-License-Identifier: Apache-2.0
#include "proceed/optimizer.hpp"
#include "proceed/prompts.hpp"
#include "proceed/rollout.hpp"
#include "proceed/tasks.hpp"

#include <benchmark/benchmark.h>

#include <sstream>

namespace
{

using namespace proceed;

std::vector<Task> tasks_for(EnvKind kind, int count)
{
    TaskGenOptions o;
    o.kind = kind;
    o.count = count;
    o.difficulty = kind == EnvKind::Search ? 4 : 20;
    o.seed = 3;
    return generate_tasks(o);
}

RolloutBuffer batch_for(EnvKind kind, int tasks, double fraction)
{
    auto const ts = tasks_for(kind, tasks);
    std::vector<std::unique_ptr<Environment>> envs;
    std::vector<const Environment*> protos;
    for (auto const& t: ts)
    {
        envs.push_back(make_environment(t));
        protos.push_back(envs.back().get());
    }
    OracleCritic critic(true);
    OracleRefiner refiner(0.8);
    RolloutConfig rc;
    rc.proceed_fraction = fraction;
    rc.seed = 5;
    return collect_batch(protos, SoftmaxPolicy(weaken(reference_params(kind), 3.0)), {&critic, &refiner}, rc);
}

void BM_SearchStep(benchmark::State& state)
{
    auto env = make_environment(tasks_for(EnvKind::Search, 1).front());
    SoftmaxPolicy policy(reference_params(EnvKind::Search));
    std::uint64_t seed = 0;
    for (auto _: state)
    {
        auto traj = vanilla_rollout(policy, *env, ++seed);
        benchmark::DoNotOptimize(traj.reward);
    }
}
BENCHMARK(BM_SearchStep);

void BM_ProceedRollout(benchmark::State& state)
{
    auto const kind = state.range(0) == 0 ? EnvKind::Search : EnvKind::Corridor;
    auto env = make_environment(tasks_for(kind, 1).front());
    SoftmaxPolicy policy(weaken(reference_params(kind), 3.0));
    OracleCritic critic(true);
    OracleRefiner refiner(0.8);
    RolloutConfig rc;
    std::uint64_t seed = 0;
    for (auto _: state)
    {
        auto traj = proceed_rollout(policy, critic, refiner, *env, ++seed, rc);
        benchmark::DoNotOptimize(traj.reward);
    }
}
BENCHMARK(BM_ProceedRollout)->Arg(0)->Arg(1);

void BM_Surrogate(benchmark::State& state)
{
    auto const buffer = batch_for(EnvKind::Search, 8, 0.5);
    auto const params = weaken(reference_params(EnvKind::Search), 3.0);
    OptimConfig config;
    for (auto _: state)
    {
        auto r = surrogate_and_gradient(buffer, params, params, config);
        benchmark::DoNotOptimize(r.objective);
    }
}
BENCHMARK(BM_Surrogate);

void BM_ParseCritic(benchmark::State& state)
{
    std::string const text = "Looks fine.\n``` json\n{\"score\": 7, \"critique\": \"ok\", "
                             "\"suggestion_search_keywords\": \"[a, b]\"}\n```\n";
    for (auto _: state)
        benchmark::DoNotOptimize(parse_critic_response(text).score);
}
BENCHMARK(BM_ParseCritic);

void BM_JsonlRoundTrip(benchmark::State& state)
{
    auto const buffer = batch_for(EnvKind::Corridor, 4, 0.5);
    for (auto _: state)
    {
        auto back = parse_jsonl(serialize_jsonl(buffer));
        benchmark::DoNotOptimize(back.groups.size());
    }
}
BENCHMARK(BM_JsonlRoundTrip);

} // namespace

BENCHMARK_MAIN();
