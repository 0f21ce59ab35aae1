// SPDX-License-Identifier: Apache-2.0
// proceed: command-line front end for task generation, rollouts, training
// and the experiment drivers.
#include "proceed/error.hpp"
#include "proceed/harness.hpp"

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"

#include <fstream>
#include <iostream>

namespace
{

using namespace proceed;

constexpr int kConfigError = 2;
constexpr int kBackendError = 3;

struct Flags
{
    std::string config;
    std::uint64_t seed = 0;
    std::string out_dir;
    int workers = 1;

    std::string env;
    std::string mode;
    std::string method = "proceed-rl";
    std::string critic;
    std::string checkpoint;
    std::string tasks;
    std::string out;
    int group_size = 0;
    double proceed_fraction = 0.0;
    int threshold = 0;
    double nu = 0.0;
    int hops = 0;
    int plan_length = 0;
    int max_steps = 0;
    int count = 0;
    int iterations = 0;
    double refiner_fidelity = 0.0;
    bool literal_double_step = false;
    bool no_kl = false;
};

struct Options
{
    CLI::Option* seed = nullptr;
    CLI::Option* out_dir = nullptr;
    CLI::Option* workers = nullptr;
    CLI::Option* env = nullptr;
    CLI::Option* critic = nullptr;
    CLI::Option* checkpoint = nullptr;
    CLI::Option* tasks = nullptr;
    CLI::Option* group_size = nullptr;
    CLI::Option* proceed_fraction = nullptr;
    CLI::Option* threshold = nullptr;
    CLI::Option* nu = nullptr;
    CLI::Option* hops = nullptr;
    CLI::Option* plan_length = nullptr;
    CLI::Option* max_steps = nullptr;
    CLI::Option* count = nullptr;
    CLI::Option* iterations = nullptr;
    CLI::Option* refiner_fidelity = nullptr;
};

bool given(const CLI::Option* opt)
{
    return opt != nullptr && opt->count() > 0;
}

void add_global(CLI::App& app, Flags& f, Options& o)
{
    app.add_option("--config", f.config, "JSON experiment config")->check(CLI::ExistingFile);
    o.seed = app.add_option("--seed", f.seed, "Root seed");
    o.out_dir = app.add_option("--out-dir", f.out_dir, "Output directory");
    o.workers = app.add_option("--workers", f.workers, "Worker threads")->check(CLI::PositiveNumber);
}

void add_env(CLI::App& cmd, Flags& f, Options& o)
{
    o.env = cmd.add_option("--env", f.env, "Environment")->check(CLI::IsMember({"search", "corridor"}));
    o.nu = cmd.add_option("--nu", f.nu, "Search noise level")->check(CLI::Range(0.0, 1.0));
    o.hops = cmd.add_option("--hops", f.hops, "Search chain length")->check(CLI::Range(2, 4));
    o.plan_length = cmd.add_option("--plan-length", f.plan_length, "Corridor optimal plan length");
    o.max_steps = cmd.add_option("--max-steps", f.max_steps, "Step budget override");
    o.tasks = cmd.add_option("--tasks", f.tasks, "Task file from gen-tasks")->check(CLI::ExistingFile);
}

void add_critic(CLI::App& cmd, Flags& f, Options& o)
{
    o.critic = cmd.add_option("--critic", f.critic, "Critic kind")
                   ->check(CLI::IsMember({"oracle", "self", "homogeneous", "external"}));
    o.threshold = cmd.add_option("--threshold", f.threshold, "Rewind threshold")->check(CLI::Range(0, 10));
    o.refiner_fidelity =
        cmd.add_option("--refiner-fidelity", f.refiner_fidelity, "Oracle refiner fidelity")->check(CLI::Range(0.0, 1.0));
    o.group_size = cmd.add_option("--group-size", f.group_size, "Trajectories per task")->check(CLI::PositiveNumber);
    o.proceed_fraction = cmd.add_option("--proceed-fraction", f.proceed_fraction, "ProCeed share of each group")
                             ->check(CLI::Range(0.0, 1.0));
    cmd.add_flag("--literal-double-step", f.literal_double_step, "Re-step after a kept probe");
}

int default_difficulty(EnvKind env)
{
    return env == EnvKind::Search ? 4 : 20;
}

ExperimentConfig resolve(ExperimentConfig base, const Flags& f, const Options& o)
{
    auto c = f.config.empty() ? base : load_config(f.config, base);
    if (given(o.seed))
        c.seed = f.seed;
    if (given(o.out_dir))
        c.out_dir = f.out_dir;
    if (given(o.workers))
        c.workers = f.workers;
    if (given(o.env))
    {
        auto const env = env_kind_from_string(f.env);
        if (env != c.env)
            c.difficulty = default_difficulty(env);
        c.env = env;
    }
    if (given(o.hops))
    {
        if (c.env != EnvKind::Search)
            throw Error(Errc::ConfigError, "--hops applies to the search environment");
        c.difficulty = f.hops;
    }
    if (given(o.plan_length))
    {
        if (c.env != EnvKind::Corridor)
            throw Error(Errc::ConfigError, "--plan-length applies to the corridor environment");
        c.difficulty = f.plan_length;
    }
    if (given(o.nu))
        c.noise_level = f.nu;
    if (given(o.max_steps))
        c.max_steps = f.max_steps;
    if (given(o.tasks))
        c.tasks_path = f.tasks;
    if (given(o.count))
        c.task_count = f.count;
    if (given(o.critic))
        c.critic.kind = critic_kind_from_string(f.critic);
    if (given(o.threshold))
        c.critic.threshold = f.threshold;
    if (given(o.refiner_fidelity))
        c.critic.refiner_fidelity = f.refiner_fidelity;
    if (given(o.group_size))
        c.group_size = f.group_size;
    if (given(o.proceed_fraction))
        c.proceed_fraction = f.proceed_fraction;
    if (given(o.checkpoint))
        c.policy.checkpoint = f.checkpoint;
    if (given(o.iterations))
        c.optim.iterations = f.iterations;
    if (f.literal_double_step)
        c.literal_double_step = true;
    if (f.no_kl)
        c.optim.kl_coeff = 0.0;
    validate(c);
    return c;
}

std::filesystem::path output_path(const ExperimentConfig& c, const Flags& f, std::string_view fallback)
{
    return f.out.empty() ? c.out_dir / fallback : std::filesystem::path(f.out);
}

void ensure_parent(const std::filesystem::path& path)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
}

int cmd_gen_tasks(const ExperimentConfig& c, const Flags& f)
{
    auto const tasks = experiment_tasks(c);
    auto const path = output_path(c, f, "tasks.json");
    ensure_parent(path);
    save_tasks(path, tasks);
    fmt::print("{} {} tasks -> {}\n", tasks.size(), to_string(c.env), path.string());
    return 0;
}

int cmd_rollout(ExperimentConfig c, const Flags& f)
{
    if (f.mode == "vanilla")
        c.proceed_fraction = 0.0;
    else if (f.mode == "proceed" && f.proceed_fraction == 0.0)
        c.proceed_fraction = 1.0;
    auto const tasks = experiment_tasks(c);
    auto const bundle = make_critic(c);
    std::vector<std::unique_ptr<Environment>> envs;
    std::vector<const Environment*> protos;
    for (auto const& t: tasks)
    {
        envs.push_back(make_environment(t));
        protos.push_back(envs.back().get());
    }
    SoftmaxPolicy const policy(initial_params(c));
    auto const buffer = collect_batch(protos, policy, bundle.suite(), rollout_config(c, c.seed));

    auto const path = output_path(c, f, "rollouts.jsonl");
    ensure_parent(path);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(Errc::IoError, fmt::format("cannot write '{}'", path.string()));
    write_jsonl(out, buffer);

    std::size_t wins = 0;
    std::size_t n = 0;
    for (auto const& g: buffer.groups)
        for (auto const& t: g.trajectories)
        {
            wins += t.reward == 1.0;
            ++n;
        }
    fmt::print("{} trajectories, success {:.4f} -> {}\n", n, n ? static_cast<double>(wins) / n : 0.0, path.string());
    return 0;
}

int cmd_train(const ExperimentConfig& c, const Flags& f)
{
    auto const method = method_from_string(f.method);
    auto const tasks = experiment_tasks(c);
    auto const bundle = make_critic(c);
    auto const dir = c.out_dir / fmt::format("train-{}-{}", to_string(method), c.seed);
    std::filesystem::create_directories(dir);

    TrainResult result;
    if (method == Method::Dapo || method == Method::ProCeedRL)
    {
        RolloutConfig rc = rollout_config(c, c.seed);
        if (method == Method::Dapo)
            rc.proceed_fraction = 0.0;
        result = train(tasks, initial_params(c), c.optim, rc, bundle.suite(), [&](int it, const PolicyParams& p) {
            save_checkpoint(dir / fmt::format("checkpoint-{:04d}.json", it), p);
        });
    }
    else
    {
        result = train_method(method, tasks, c, c.seed, bundle.suite());
    }
    save_checkpoint(dir / "final.json", result.params);
    auto const metrics = f.out.empty() ? dir / "metrics.csv" : std::filesystem::path(f.out);
    ensure_parent(metrics);
    std::ofstream out(metrics, std::ios::binary);
    write_metrics_csv(out, result.metrics);
    fmt::print("{} iterations -> {}\n", result.metrics.size(), (dir / "final.json").string());
    return 0;
}

int cmd_eval(const ExperimentConfig& c)
{
    auto const tasks = experiment_tasks(c);
    double const success = evaluate_success(initial_params(c), tasks, c.eval_episodes, c.seed, c.workers);
    fmt::print("{{\"tasks\": {}, \"episodes\": {}, \"success\": {:.6f}}}\n", tasks.size(), c.eval_episodes, success);
    return 0;
}

int exit_code(const Error& e)
{
    switch (e.code())
    {
    case Errc::BackendFailure:
    case Errc::Timeout:
    case Errc::HttpError:
    case Errc::RateLimited:
    case Errc::ExhaustedRetries:
        return kBackendError;
    default:
        return kConfigError;
    }
}

} // namespace

int main(int argc, char** argv)
{
    spdlog::set_default_logger(spdlog::stderr_color_mt("proceed"));

    CLI::App app{"ProCeed testbed: rollouts, training and experiment drivers"};
    app.require_subcommand(1);
    Flags f;
    Options global;
    add_global(app, f, global);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");

    struct Sub
    {
        CLI::App* app;
        std::optional<Experiment> experiment;
        Options opts;
    };
    std::vector<Sub> subs;

    auto* gen = app.add_subcommand("gen-tasks", "Generate a task file");
    Options o = global;
    add_env(*gen, f, o);
    o.count = gen->add_option("--count", f.count, "Number of tasks")->check(CLI::PositiveNumber);
    gen->add_option("--out", f.out, "Output JSON path");
    subs.push_back({gen, std::nullopt, o});

    o = global;
    auto* rollout = app.add_subcommand("rollout", "Collect trajectories to JSONL");
    add_env(*rollout, f, o);
    add_critic(*rollout, f, o);
    rollout->add_option("--mode", f.mode, "Rollout mode")->check(CLI::IsMember({"vanilla", "proceed"}));
    o.checkpoint = rollout->add_option("--checkpoint", f.checkpoint, "Policy checkpoint")->check(CLI::ExistingFile);
    rollout->add_option("--out", f.out, "Output JSONL path");
    subs.push_back({rollout, std::nullopt, o});

    o = global;
    auto* trn = app.add_subcommand("train", "Train one method and write metrics and checkpoints");
    add_env(*trn, f, o);
    add_critic(*trn, f, o);
    trn->add_option("--method", f.method, "Training method")
        ->check(CLI::IsMember({"dapo", "proceed-rl", "rft", "sft", "proceed-sft"}));
    o.iterations = trn->add_option("--iterations", f.iterations, "Training iterations")->check(CLI::PositiveNumber);
    trn->add_flag("--no-kl", f.no_kl, "Drop the KL penalty");
    trn->add_option("--out", f.out, "Metrics CSV path");
    subs.push_back({trn, std::nullopt, o});

    o = global;
    auto* ev = app.add_subcommand("eval", "Held-out success of a checkpoint");
    add_env(*ev, f, o);
    ev->add_option("--checkpoint", f.checkpoint, "Policy checkpoint")->check(CLI::ExistingFile);
    subs.push_back({ev, std::nullopt, o});

    auto experiment = [&](const char* name, const char* help, Experiment e) {
        auto* cmd = app.add_subcommand(name, help);
        Options opts = global;
        add_env(*cmd, f, opts);
        add_critic(*cmd, f, opts);
        subs.push_back({cmd, e, opts});
        return cmd;
    };
    experiment("passk", "Cost-aligned pass@k comparison", Experiment::PassK);
    experiment("ablate-threshold", "Rewind threshold sweep", Experiment::ThresholdAblation);
    experiment("noise-study", "Success under low and high search noise", Experiment::NoiseStudy);
    experiment("refine-study", "Score change of refined actions", Experiment::RefineStudy);
    experiment("cost-report", "Critic overhead ratios", Experiment::CostReport);
    auto* cmp = experiment("train-compare", "Train each method over paired seeds", Experiment::TrainCompare);
    cmp->add_flag("--no-kl", f.no_kl, "Drop the KL penalty");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        int const rc = app.exit(e);
        return rc == 0 ? 0 : kConfigError;
    }
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

    try
    {
        for (auto const& s: subs)
        {
            if (!s.app->parsed())
                continue;
            if (s.experiment)
            {
                auto const c = resolve(preset(*s.experiment), f, s.opts);
                auto const path = run_experiment(*s.experiment, c);
                fmt::print("{} -> {}\n", to_string(*s.experiment), path.string());
                return 0;
            }
            if (s.app == gen)
                return cmd_gen_tasks(resolve({}, f, s.opts), f);
            if (s.app == rollout)
                return cmd_rollout(resolve({}, f, s.opts), f);
            if (s.app == trn)
                return cmd_train(resolve(preset(Experiment::TrainCompare), f, s.opts), f);
            if (s.app == ev)
            {
                auto c = resolve({}, f, s.opts);
                if (!f.checkpoint.empty())
                    c.policy.checkpoint = f.checkpoint;
                return cmd_eval(c);
            }
        }
    }
    catch (const Error& e)
    {
        spdlog::error("{}", e.what());
        return exit_code(e);
    }
    catch (const std::exception& e)
    {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
