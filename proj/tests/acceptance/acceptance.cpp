// SPDX-License-Identifier: Apache-2.0
// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failures (capped at 125).
#include "proceed/critic.hpp"
#include "proceed/error.hpp"
#include "proceed/harness.hpp"
#include "proceed/optimizer.hpp"
#include "proceed/prompts.hpp"
#include "proceed/rollout.hpp"
#include "proceed/tasks.hpp"
#include "proceed/trajectory.hpp"

#include "critic_fixtures.hpp"
#include "fixtures.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

using namespace proceed;

namespace
{

struct Outcome
{
    bool pass = false;
    std::string detail;
};

struct Criterion
{
    std::string name;
    std::function<Outcome()> run;
};

int g_workers = 1;

template <typename T>
T with_workers(T config)
{
    config.workers = g_workers;
    return config;
}

Outcome sigma_exactness()
{
    bool const ok = sigma(0.0) == 0.0 && sigma(1.0) == 0.0 && sigma(0.5) == 0.25 &&
                    sigma(StepTag::OnPolicy, 0.0) == 1.0 && sigma(StepTag::OnPolicy, 0.37) == 1.0 &&
                    sigma(StepTag::OnPolicy, 1.0) == 1.0 && sigma(StepTag::Demonstration, 0.5) == 0.25;
    return {ok, fmt::format("sigma(0)={} sigma(1)={} sigma(0.5)={}", sigma(0.0), sigma(1.0), sigma(0.5))};
}

Outcome advantage_exactness()
{
    std::vector<double> const r{1, 1, 0, 0};
    std::vector<double> const same{1, 1, 1, 1};
    auto const a = group_advantage(r);
    bool const ok = a && *a == std::vector<double>{1, 1, -1, -1} && !group_advantage(same);
    return {ok, a ? fmt::format("[{}, {}, {}, {}], equal group dropped={}", (*a)[0], (*a)[1], (*a)[2], (*a)[3],
                                !group_advantage(same))
                  : "group dropped"};
}

Outcome gradient_oracle()
{
    CounterRng rng(20240601);
    double worst = 0.0;
    std::size_t clipped = 0;
    for (int trial = 0; trial < 20; ++trial)
    {
        auto const buffer = testing::random_training_buffer(rng, 6);
        auto const old = testing::random_params(rng, 6, 1.0);
        auto params = old;
        for (auto& v: params.theta)
            v += (rng.uniform() - 0.5) * 0.8;
        OptimConfig c;
        c.kl_coeff = trial % 2 == 0 ? 0.01 : 0.0;
        worst = std::max(worst, testing::gradient_check(buffer, params, old, c, 1e-5));
        for (auto b: surrogate_and_gradient(buffer, params, old, c).branches)
            clipped += b != Branch::Unclipped ? 1 : 0;
    }
    return {worst <= 1e-4, fmt::format("max relative error {:.2e} over 20 buffers, {} clipped steps", worst, clipped)};
}

Outcome cost_ratios()
{
    struct Row
    {
        double policy, critic, expected;
    };
    std::array<Row, 5> const rows{{{857.36, 1320.59, 2.54},
                                   {857.36, 211.69, 1.25},
                                   {1410.51, 1111.39, 1.79},
                                   {1010.36, 760.84, 1.75},
                                   {1010.36, 246.02, 1.24}}};
    bool ok = true;
    std::string detail;
    for (auto const& r: rows)
    {
        double const got = cost_ratio(r.policy, r.critic);
        ok = ok && std::abs(got - r.expected) <= 0.005;
        detail += fmt::format("{}{:.3f}", detail.empty() ? "" : " ", got);
    }
    return {ok, detail};
}

Outcome rewind_correctness()
{
    TaskGenOptions o;
    o.kind = EnvKind::Search;
    o.count = 300;
    o.difficulty = 4;
    o.seed = 404;
    o.noise_level = 0.5;
    auto const search = generate_tasks(o);
    o.kind = EnvKind::Corridor;
    o.count = 100;
    o.difficulty = 12;
    auto const corridor = generate_tasks(o);

    OracleCritic critic(true);
    OracleRefiner refiner(0.8);

    std::size_t identical = 0;
    std::size_t compared = 0;
    std::size_t demos = 0;
    std::size_t mismatches = 0;
    for (auto const* set: {&search, &corridor})
    {
        auto const kind = kind_of(set->front());
        SoftmaxPolicy const policy(weaken(reference_params(kind), 3));
        for (auto const& task: *set)
        {
            auto env = make_environment(task);
            for (std::uint64_t seed = 0; seed < 3; ++seed)
            {
                RolloutConfig off;
                off.rewind_enabled = false;
                auto const v = vanilla_rollout(policy, *env, seed);
                auto p = proceed_rollout(policy, critic, refiner, *env, seed, off);
                p.mode = RolloutMode::Vanilla;
                ++compared;
                identical += p == v ? 1 : 0;

                RolloutConfig on;
                auto const t = proceed_rollout(policy, critic, refiner, *env, seed, on);
                demos += t.demonstration_count();
                mismatches += testing::replay_mismatches(t, *env);
            }
        }
    }
    bool const ok = identical == compared && mismatches == 0 && demos >= 1000;
    return {ok, fmt::format("{}/{} identical without rewind; {} demonstration steps, {} replay mismatches", identical,
                            compared, demos, mismatches)};
}

Outcome noise_study()
{
    auto const r = exp_noise_study(with_workers(preset(Experiment::NoiseStudy)));
    auto cell = [&](std::string_view policy, std::size_t i) {
        auto it = std::find_if(r.cells.begin(), r.cells.end(), [&](auto const& c) { return c.policy == policy; });
        return *(it + static_cast<std::ptrdiff_t>(i));
    };
    auto drop = [&](std::string_view policy) {
        return *std::find_if(r.drops.begin(), r.drops.end(), [&](auto const& d) { return d.policy == policy; });
    };
    auto const s = drop("strong");
    auto const w = drop("weak");
    bool const decreases = cell("strong", 1).success_rate < cell("strong", 0).success_rate &&
                           cell("weak", 1).success_rate < cell("weak", 0).success_rate;
    bool const larger = std::abs(w.drop) > std::abs(s.drop);
    bool const separated = w.interval.low > s.interval.high || s.interval.low > w.interval.high;
    return {decreases && larger && separated,
            fmt::format("strong {:.3f}->{:.3f} drop {:.3f} [{:.3f},{:.3f}]; weak {:.3f}->{:.3f} drop {:.3f} "
                        "[{:.3f},{:.3f}]",
                        cell("strong", 0).success_rate, cell("strong", 1).success_rate, s.drop, s.interval.low,
                        s.interval.high, cell("weak", 0).success_rate, cell("weak", 1).success_rate, w.drop,
                        w.interval.low, w.interval.high)};
}

Outcome passk()
{
    auto const r = exp_passk(with_workers(preset(Experiment::PassK)));
    double const ceiling = r.vanilla_ceiling();
    std::optional<int> exceeds;
    for (auto const& row: r.rows)
        if (row.proceed && row.k <= 8 && *row.proceed > ceiling)
        {
            exceeds = row.k;
            break;
        }
    auto const& first = r.rows.front();
    bool const ok = first.proceed && *first.proceed > first.vanilla && exceeds;
    return {ok, fmt::format("pass@1 proceed {:.3f} vs vanilla {:.3f}; vanilla pass@32 {:.3f}; first k exceeding: {}; "
                            "cost ratio {:.3f}",
                            first.proceed.value_or(0.0), first.vanilla, ceiling,
                            exceeds ? std::to_string(*exceeds) : "none", r.cost_ratio)};
}

Outcome threshold_ablation()
{
    auto const r = exp_threshold_ablation(with_workers(preset(Experiment::ThresholdAblation)));
    double mid = 0.0;
    for (int t = 2; t <= 6; ++t)
        mid = std::max(mid, r.success(t));
    double const none = r.success(std::nullopt);
    double const at3 = r.success(3);
    double const at10 = r.success(10);
    return {at3 > none && at10 <= mid,
            fmt::format("no rewind {:.3f}, l_th=3 {:.3f}, l_th=10 {:.3f}, max l_th in 2..6 {:.3f}", none, at3, at10,
                        mid)};
}

Outcome refine_study()
{
    auto const c = with_workers(preset(Experiment::RefineStudy));
    auto const r = exp_refine_study(c);
    auto const low = r.mean_delta(0, 3);
    auto const high = r.mean_delta(8, 9);
    bool const ok = c.critic.refiner_fidelity == 0.8 && r.count(0, 3) >= 1000 && low > 0.0 && high <= low;
    return {ok, fmt::format("score<=3: {} steps, mean delta {:.3f}; score 8-9: {} steps, mean delta {:.3f}",
                            r.count(0, 3), low, r.count(8, 9), high)};
}

Outcome training()
{
    auto const c = with_workers(preset(Experiment::TrainCompare));
    auto const r = exp_train_compare(c);
    bool ok = true;
    std::string detail;
    for (auto seed: c.train_seeds)
    {
        auto const dapo = r.success(Method::Dapo, seed).value_or(-1);
        auto const rl = r.success(Method::ProCeedRL, seed).value_or(-1);
        auto const sft = r.success(Method::Sft, seed).value_or(-1);
        auto const psft = r.success(Method::ProCeedSft, seed).value_or(-1);
        ok = ok && rl >= dapo && psft >= sft && dapo >= 0 && sft >= 0;
        detail += fmt::format("{}seed {}: proceed-rl {:.3f} dapo {:.3f} proceed-sft {:.3f} sft {:.3f}",
                              detail.empty() ? "" : "; ", seed, rl, dapo, psft, sft);
    }
    return {ok, detail};
}

Outcome parser_totality()
{
    CounterRng rng(10000);
    std::size_t total = 0;
    std::size_t parsed = 0;
    for (int i = 0; i < 10000; ++i)
    {
        auto const s = testing::fuzz_string(rng);
        if (!testing::parses_totally(s))
            return {false, fmt::format("input {} escaped the documented errors", i)};
        try
        {
            (void)parse_critic_response(s);
            ++parsed;
        }
        catch (const Error&)
        {
        }
        ++total;
    }
    std::size_t fixtures_ok = 0;
    auto const fixtures = testing::critic_fixtures();
    for (auto const& f: fixtures)
    {
        try
        {
            fixtures_ok += parse_critic_response(f.text) == f.expected ? 1 : 0;
        }
        catch (const Error&)
        {
        }
    }
    return {fixtures_ok == fixtures.size(), fmt::format("{} fuzz inputs ({} parsed), {}/{} fixtures", total, parsed,
                                                        fixtures_ok, fixtures.size())};
}

Outcome persistence()
{
    CounterRng rng(1000);
    std::size_t exact = 0;
    for (int i = 0; i < 1000; ++i)
    {
        auto b = testing::random_buffer(rng);
        if (b.groups.empty())
            b.policy_snapshot_id.clear();
        std::stringstream ss;
        write_jsonl(ss, b);
        try
        {
            exact += read_jsonl(ss) == b ? 1 : 0;
        }
        catch (const Error&)
        {
        }
    }

    auto const dir = std::filesystem::temp_directory_path() / "proceed_acceptance_rerun";
    std::filesystem::remove_all(dir);
    auto c = preset(Experiment::PassK);
    c.task_count = 100;
    c.out_dir = dir;
    auto read = [](const std::filesystem::path& p) {
        std::stringstream s;
        s << std::ifstream(p).rdbuf();
        return s.str();
    };
    c.workers = 1;
    auto const first = read(run_experiment(Experiment::PassK, c));
    c.workers = g_workers;
    auto const second = read(run_experiment(Experiment::PassK, c));
    std::filesystem::remove_all(dir);
    bool const same = !first.empty() && first == second;
    return {exact == 1000 && same,
            fmt::format("{}/1000 buffers exact; rerun csv {}", exact, same ? "byte-identical" : "differs")};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"acceptance checks"};
    g_workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    std::string only;
    app.add_option("--workers", g_workers, "rollout threads")->check(CLI::PositiveNumber);
    app.add_option("--only", only, "run criteria whose name contains this text");
    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(spdlog::level::err);

    std::vector<Criterion> const criteria{
        {"sigma exactness", sigma_exactness},
        {"advantage exactness", advantage_exactness},
        {"gradient oracle", gradient_oracle},
        {"cost ratio reproduction", cost_ratios},
        {"rewind correctness", rewind_correctness},
        {"noise sensitivity", noise_study},
        {"pass@k saturation", passk},
        {"threshold ablation", threshold_ablation},
        {"refinement improvement", refine_study},
        {"training comparison", training},
        {"parser totality", parser_totality},
        {"persistence", persistence},
    };

    int failures = 0;
    for (auto const& c: criteria)
    {
        if (!only.empty() && c.name.find(only) == std::string::npos)
            continue;
        auto const start = std::chrono::steady_clock::now();
        Outcome out;
        try
        {
            out = c.run();
        }
        catch (const std::exception& e)
        {
            out = {false, fmt::format("threw: {}", e.what())};
        }
        double const secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failures += out.pass ? 0 : 1;
        fmt::print("{} {} ({:.1f}s): {}\n", out.pass ? "PASS" : "FAIL", c.name, secs, out.detail);
        std::fflush(stdout);
    }
    return std::min(failures, 125);
}
