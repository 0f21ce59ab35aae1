// SPDX-License-Identifier: Apache-2.0
#include "proceed/error.hpp"
#include "proceed/harness.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace proceed;

namespace
{

Errc config_error(std::string_view json)
{
    try
    {
        (void)config_from_json(json);
    }
    catch (const Error& e)
    {
        return e.code();
    }
    FAIL("expected an error");
    return Errc::IoError;
}

std::filesystem::path scratch(std::string_view name)
{
    auto const dir = std::filesystem::temp_directory_path() / "proceed_test_harness" / name;
    std::filesystem::remove_all(dir);
    return dir;
}

} // namespace

TEST_CASE("config json overlays and rejects unknown keys")
{
    auto const c = config_from_json(R"({"seed": 3, "critic": {"threshold": 5}, "methods": ["dapo", "sft"]})");
    CHECK(c.seed == 3);
    CHECK(c.critic.threshold == 5);
    CHECK(c.critic.refiner_fidelity == 0.8);
    CHECK(c.methods == std::vector<Method>{Method::Dapo, Method::Sft});

    for (auto const* bad: {R"({"sede": 3})", R"({"critic": {"treshold": 1}})", R"({"seed": "x"})",
                           R"({"env": "maze"})", R"({"methods": ["ppo"]})", R"([1, 2])", "{", R"({"group_size": 0})",
                           R"({"tasks_path": "/does/not/exist.json"})"})
    {
        CAPTURE(bad);
        CHECK(config_error(bad) == Errc::ConfigError);
    }

    for (auto e: {Experiment::NoiseStudy, Experiment::PassK, Experiment::ThresholdAblation, Experiment::RefineStudy,
                  Experiment::TrainCompare, Experiment::CostReport})
    {
        auto const p = preset(e);
        CHECK_NOTHROW(validate(p));
        CHECK(config_from_json(config_to_json(p)) == p);
    }
}

TEST_CASE("config hash")
{
    auto const a = preset(Experiment::PassK);
    auto b = a;
    b.workers = 16;
    b.out_dir = "elsewhere";
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    b.seed += 1;
    CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("load_config reads files")
{
    auto const dir = scratch("load");
    std::filesystem::create_directories(dir);
    auto const path = dir / "c.json";
    std::ofstream(path) << R"({"task_count": 12})";
    CHECK(load_config(path).task_count == 12);
    CHECK_THROWS_AS(load_config(dir / "missing.json"), Error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("intervals")
{
    auto const w = wilson_interval(50, 100);
    CHECK(w.low == doctest::Approx(0.4038).epsilon(1e-3));
    CHECK(w.high == doctest::Approx(0.5962).epsilon(1e-3));
    auto const edge = wilson_interval(0, 20);
    CHECK(edge.low == doctest::Approx(0.0));
    CHECK(edge.high > 0.0);

    auto const d = difference_interval(80, 100, 50, 100);
    CHECK(d.low < 0.3);
    CHECK(d.high > 0.3);
    CHECK(d.low > 0.0);
}

TEST_CASE("pass_at_k")
{
    RolloutBuffer b;
    for (int g = 0; g < 4; ++g)
    {
        Group group;
        for (int k = 0; k < 4; ++k)
        {
            Trajectory t;
            t.done = true;
            t.reward = k == g ? 1.0 : 0.0;
            group.trajectories.push_back(t);
        }
        b.groups.push_back(group);
    }
    CHECK(pass_at_k(b, 1) == 0.25);
    CHECK(pass_at_k(b, 2) == 0.5);
    CHECK(pass_at_k(b, 4) == 1.0);
    double prev = 0.0;
    for (int k = 1; k <= 4; ++k)
    {
        CHECK(pass_at_k(b, k) >= prev);
        prev = pass_at_k(b, k);
    }
}

TEST_CASE("experiment reruns produce identical csv")
{
    auto c = preset(Experiment::NoiseStudy);
    c.episodes = 60;
    c.out_dir = scratch("rerun");
    auto const path = run_experiment(Experiment::NoiseStudy, c);
    std::stringstream first;
    first << std::ifstream(path).rdbuf();
    c.workers = 4;
    run_experiment(Experiment::NoiseStudy, c);
    std::stringstream second;
    second << std::ifstream(path).rdbuf();
    CHECK(first.str() == second.str());
    CHECK(first.str().find(config_hash(c)) != std::string::npos);

    auto const table = to_table(exp_noise_study(c), c);
    CHECK(table.to_csv() == first.str());
    CHECK(table.columns.at(0) == "config_hash");
    CHECK(table.columns.at(1) == "seed");
    std::filesystem::remove_all(c.out_dir);
}

TEST_CASE("small experiment drivers")
{
    auto c = preset(Experiment::ThresholdAblation);
    c.task_count = 40;
    c.thresholds = {0, 3, 10};
    auto const ab = exp_threshold_ablation(c);
    REQUIRE(ab.rows.size() == 4);
    CHECK_FALSE(ab.rows[0].threshold);
    std::size_t scored = 0;
    for (auto const& [score, n]: ab.histogram)
    {
        CHECK((score >= 0 && score <= 10));
        scored += n;
    }
    CHECK(scored > 0);

    auto p = preset(Experiment::PassK);
    p.task_count = 30;
    p.calibration_tasks = 10;
    auto const pk = exp_passk(p);
    CHECK(pk.rows.size() == 32);
    CHECK(pk.cost_ratio > 1.0);
    for (std::size_t i = 1; i < pk.rows.size(); ++i)
        CHECK(pk.rows[i].vanilla >= pk.rows[i - 1].vanilla);

    auto r = preset(Experiment::CostReport);
    r.task_count = 10;
    auto const rows = cost_report(r);
    CHECK(rows.size() == reference_unit_pairs().size() + 1);
    CHECK(rows[0].ratio == doctest::Approx(1.0 + 1320.59 / 857.36));
}

TEST_CASE("single method training")
{
    auto c = preset(Experiment::TrainCompare);
    c.task_count = 8;
    c.optim.iterations = 3;
    c.optim.batch_groups = 4;
    c.group_size = 4;
    auto const tasks = experiment_tasks(c);
    auto const critic = make_critic(c);
    auto const r = train_method(Method::ProCeedRL, tasks, c, 1, critic.suite());
    CHECK(r.metrics.size() == 3);
    CHECK(r.params.theta.size() == 8);
    CHECK(method_from_string(to_string(Method::ProCeedSft)) == Method::ProCeedSft);
    CHECK_THROWS_AS(method_from_string("ppo"), Error);
}
